//! Duplication-divergence random graphs.
//!
//! The seed network `u_s` is an Erdos-Renyi graph on `d_s` nodes. Growth to `d`
//! nodes reads a [`UnitStream`] `u_r` in a fixed order. At each growth step,
//! with `n` nodes present:
//!
//! 1. one draw picks the duplicated node `i = floor(u * n)`;
//! 2. one draw per current neighbour `j` of `i`, in ascending `j`, keeps the
//!    edge `(j, new)` when `u < p`;
//! 3. one draw links `(i, new)` when `u < r`.
//!
//! The stream is consumed positionally, so replaying it after the seed changes
//! is a fixed deterministic map even though the number of draws per step
//! depends on realized degrees.
//!
//! Graphs compare through the spectral approximation to edit distance: the sum
//! of squared differences of ascending adjacency eigenvalues.
//!
//! Edge-list file format: a header line `nodes N`, then one `i j` line per
//! edge with `0 <= i < j < N`, sorted.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::latent::{take, CanonicalBytes, LatentRandomness};
use crate::model::{BoxPrior, InnerMoveConfig, Latent, MoveStats, MoverKind, SimulatorModel};
use crate::rng::UnitStream;

/// Undirected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Graph {
    adjacency: Vec<Vec<u32>>,
}

impl Graph {
    pub fn empty(nodes: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); nodes],
        }
    }

    pub fn from_edges(nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(nodes);
        for (i, j) in edges {
            if i == j || i >= nodes || j >= nodes {
                return Err(Error::Parse(format!("invalid edge ({i}, {j}) for {nodes} nodes")));
            }
            g.add_edge(i, j);
        }
        Ok(g)
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&(j as u32)).is_ok()
    }

    /// Adds `{i, j}`; returns false when it was already present.
    pub fn add_edge(&mut self, i: usize, j: usize) -> bool {
        debug_assert_ne!(i, j, "self-loops are not allowed");
        match self.adjacency[i].binary_search(&(j as u32)) {
            Ok(_) => false,
            Err(pos) => {
                self.adjacency[i].insert(pos, j as u32);
                let pos = self.adjacency[j]
                    .binary_search(&(i as u32))
                    .unwrap_err();
                self.adjacency[j].insert(pos, i as u32);
                true
            }
        }
    }

    pub fn add_node(&mut self) -> usize {
        self.adjacency.push(Vec::new());
        self.adjacency.len() - 1
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, nb)| {
            nb.iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.nodes();
        let mut m = DMatrix::zeros(n, n);
        for (i, nb) in self.adjacency.iter().enumerate() {
            for &j in nb {
                m[(i, j as usize)] = 1.0;
            }
        }
        m
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut g = Self::empty(self.nodes());
        for (i, j) in self.edges() {
            g.add_edge(perm[i], perm[j]);
        }
        g
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("nodes {}\n", self.nodes());
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty graph file".into()))?;
        let nodes: usize = header
            .strip_prefix("nodes ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad header line {header:?}")))?;
        let edges = lines
            .map(|line| {
                let mut it = line.split_whitespace().map(str::parse::<usize>);
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(i)), Some(Ok(j)), None) if i < j => Ok((i, j)),
                    _ => Err(Error::Parse(format!("bad edge line {line:?}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_edges(nodes, edges)
    }
}

/// Number of unordered pairs on `n` nodes.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row-major index of the pair `(i, j)`, `i < j`, among all pairs on `n` nodes.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Seed graph stored as one indicator per node pair (row-major, `i < j`).
///
/// Canonical bytes: `u32` node count (little-endian), then the indicators packed
/// eight per byte, least significant bit first, padded with zero bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedGraph {
    nodes: usize,
    present: Vec<bool>,
    edges: usize,
}

impl SeedGraph {
    pub fn empty(nodes: usize) -> Self {
        Self {
            nodes,
            present: vec![false; pair_count(nodes)],
            edges: 0,
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn pairs(&self) -> usize {
        self.present.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn indicators(&self) -> &[bool] {
        &self.present
    }

    pub fn set(&mut self, pair: usize, on: bool) {
        if self.present[pair] != on {
            self.present[pair] = on;
            if on {
                self.edges += 1;
            } else {
                self.edges -= 1;
            }
        }
    }

    pub fn toggle(&mut self, pair: usize) {
        let on = !self.present[pair];
        self.set(pair, on);
    }

    pub fn from_graph(g: &Graph) -> Self {
        let mut s = Self::empty(g.nodes());
        for (i, j) in g.edges() {
            s.set(pair_index(g.nodes(), i, j), true);
        }
        s
    }

    pub fn to_graph(&self) -> Graph {
        let n = self.nodes;
        let mut g = Graph::empty(n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.present[k] {
                    g.adjacency[i].push(j as u32);
                    g.adjacency[j].push(i as u32);
                }
                k += 1;
            }
        }
        g
    }

    /// Index of the `rank`-th pair (0-based) whose indicator equals `state`.
    fn nth_pair_with(&self, state: bool, rank: usize) -> usize {
        self.present
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == state)
            .nth(rank)
            .map(|(k, _)| k)
            .expect("rank within count")
    }
}

impl CanonicalBytes for SeedGraph {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.nodes as u32).to_le_bytes());
        for chunk in self.present.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |b, (k, &on)| b | ((on as u8) << k));
            out.push(byte);
        }
    }

    fn read_canonical(input: &mut &[u8]) -> Result<Self> {
        let nodes = u32::from_le_bytes(take(input, 4)?.try_into().expect("4 bytes")) as usize;
        let pairs = pair_count(nodes);
        let bytes = take(input, pairs.div_ceil(8))?;
        let mut s = Self::empty(nodes);
        for k in 0..pairs {
            s.set(k, bytes[k / 8] >> (k % 8) & 1 == 1);
        }
        Ok(s)
    }
}

/// Erdos-Renyi seed: each of the `d_s (d_s - 1) / 2` pairs is an edge with
/// probability `a`, independently.
pub fn seed_graph_sample<R: Rng + ?Sized>(seed_nodes: usize, a: f64, rng: &mut R) -> SeedGraph {
    let mut s = SeedGraph::empty(seed_nodes);
    for k in 0..s.pairs() {
        if rng.random::<f64>() < a {
            s.set(k, true);
        }
    }
    s
}

pub fn seed_log_density(seed: &SeedGraph, a: f64) -> f64 {
    let e = seed.edge_count() as f64;
    let non = (seed.pairs() - seed.edge_count()) as f64;
    // 0 * ln 0 is taken as 0.
    let term = |count: f64, prob: f64| if count == 0.0 { 0.0 } else { count * prob.ln() };
    term(e, a) + term(non, 1.0 - a)
}

/// Grows `seed` to `target_nodes` nodes by duplication-divergence, reading all
/// random choices from `stream` in the order documented at module level.
pub fn dd_grow(seed: &Graph, p: f64, r: f64, target_nodes: usize, stream: &UnitStream) -> Result<Graph> {
    if seed.nodes() == 0 || seed.nodes() > target_nodes {
        return Err(Error::Precondition(format!(
            "seed has {} nodes, target is {target_nodes}",
            seed.nodes()
        )));
    }
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&r) {
        return Err(Error::Precondition(format!("p = {p}, r = {r} outside [0, 1]")));
    }
    let mut g = seed.clone();
    g.adjacency.reserve(target_nodes - seed.nodes());
    let mut reader = stream.reader();
    while g.nodes() < target_nodes {
        let n = g.nodes();
        let parent = ((reader.next_unit()? * n as f64) as usize).min(n - 1);
        let child = g.add_node();
        let degree = g.adjacency[parent].len();
        for k in 0..degree {
            let j = g.adjacency[parent][k] as usize;
            if reader.next_unit()? < p {
                // `child` is the largest label, so pushing keeps lists sorted.
                g.adjacency[j].push(child as u32);
                g.adjacency[child].push(j as u32);
            }
        }
        if reader.next_unit()? < r {
            g.adjacency[parent].push(child as u32);
            let pos = g.adjacency[child]
                .binary_search(&(parent as u32))
                .unwrap_err();
            g.adjacency[child].insert(pos, parent as u32);
        }
    }
    Ok(g)
}

/// Ascending adjacency eigenvalues.
pub fn spectrum(g: &Graph) -> Result<Vec<f64>> {
    let n = g.nodes();
    if n == 0 {
        return Ok(Vec::new());
    }
    let a = g.adjacency_matrix();
    let mut values: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        // The QR sweep can produce NaN when deflated off-diagonals underflow to
        // subnormals on very sparse matrices. A diagonal shift avoids that.
        let shift = n as f64;
        let shifted = a + nalgebra::DMatrix::identity(n, n) * shift;
        values = shifted.symmetric_eigenvalues().iter().map(|v| v - shift).collect();
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen {
            size: n,
            detail: format!("non-finite eigenvalue for a graph with {} edges", g.edge_count()),
        });
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

pub fn spectrum_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Spectral approximation to the edit distance between two graphs on the
/// same number of nodes.
pub fn spectral_distance(g1: &Graph, g2: &Graph) -> Result<f64> {
    if g1.nodes() != g2.nodes() {
        return Err(Error::DimensionMismatch {
            expected: g1.nodes(),
            actual: g2.nodes(),
        });
    }
    spectrum_distance(&spectrum(g1)?, &spectrum(g2)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphModelConfig {
    /// Final node count.
    pub d: usize,
    /// Seed node count.
    pub seed_nodes: usize,
    /// Seed edge probability.
    pub seed_edge_prob: f64,
    pub true_p: f64,
    pub true_r: f64,
    /// Probability of each inter-clique edge in the two-clique synthesis seed.
    pub synth_link_prob: f64,
}

impl Default for GraphModelConfig {
    fn default() -> Self {
        Self {
            d: 100,
            seed_nodes: 20,
            seed_edge_prob: 0.3,
            true_p: 0.5,
            true_r: 0.2,
            synth_link_prob: 0.3,
        }
    }
}

impl GraphModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed_nodes < 2 || self.seed_nodes > self.d {
            return Err(Error::InvalidConfig(format!(
                "need 2 <= seed_nodes <= d, got seed_nodes = {}, d = {}",
                self.seed_nodes, self.d
            )));
        }
        for (name, v) in [
            ("seed_edge_prob", self.seed_edge_prob),
            ("true_p", self.true_p),
            ("true_r", self.true_r),
            ("synth_link_prob", self.synth_link_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Two cliques of `ceil(d_s / 2)` and `floor(d_s / 2)` nodes, each
/// inter-clique pair linked with probability `link_prob`.
pub fn two_clique_seed<R: Rng + ?Sized>(seed_nodes: usize, link_prob: f64, rng: &mut R) -> Graph {
    let first = seed_nodes.div_ceil(2);
    let mut g = Graph::empty(seed_nodes);
    for i in 0..seed_nodes {
        for j in (i + 1)..seed_nodes {
            let same_clique = (i < first) == (j < first);
            if same_clique || rng.random::<f64>() < link_prob {
                g.add_edge(i, j);
            }
        }
    }
    g
}

#[derive(Clone, Debug)]
pub struct GraphModel {
    config: GraphModelConfig,
    y: Graph,
    y_spectrum: Vec<f64>,
    prior: BoxPrior,
}

impl GraphModel {
    pub fn new(config: GraphModelConfig, y: Graph) -> Result<Self> {
        config.validate()?;
        if y.nodes() != config.d {
            return Err(Error::DimensionMismatch {
                expected: config.d,
                actual: y.nodes(),
            });
        }
        let y_spectrum = spectrum(&y)?;
        Ok(Self {
            config,
            y,
            y_spectrum,
            prior: BoxPrior::new(vec![0.0, 0.0], vec![1.0, 1.0])?,
        })
    }

    pub fn config(&self) -> &GraphModelConfig {
        &self.config
    }

    /// Observed network: a two-clique seed grown with the true `(p, r)`.
    pub fn synthesize<R: Rng + ?Sized>(config: &GraphModelConfig, rng: &mut R) -> Result<Graph> {
        config.validate()?;
        let seed = two_clique_seed(config.seed_nodes, config.synth_link_prob, rng);
        let stream = UnitStream::Keyed(rng.random());
        dd_grow(&seed, config.true_p, config.true_r, config.d, &stream)
    }

    fn grow(&self, u: &Latent<SeedGraph>, theta: &[f64]) -> Result<Graph> {
        if u.moved.nodes() != self.config.seed_nodes {
            return Err(Error::DimensionMismatch {
                expected: self.config.seed_nodes,
                actual: u.moved.nodes(),
            });
        }
        dd_grow(&u.moved.to_graph(), theta[0], theta[1], self.config.d, &u.fixed)
    }
}

impl SimulatorModel for GraphModel {
    type Moved = SeedGraph;
    type Output = Graph;

    fn name(&self) -> &'static str {
        "graph"
    }

    fn prior(&self) -> &BoxPrior {
        &self.prior
    }

    fn proposal_support(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0, 0.0], vec![1.0, 1.0])
    }

    fn observed(&self) -> &Graph {
        &self.y
    }

    fn sample_latent<R: Rng + ?Sized>(&self, _theta: &[f64], rng: &mut R) -> Latent<SeedGraph> {
        let moved = seed_graph_sample(self.config.seed_nodes, self.config.seed_edge_prob, rng);
        LatentRandomness {
            moved,
            fixed: UnitStream::Keyed(rng.random()),
        }
    }

    fn log_density_moved(&self, moved: &SeedGraph, _theta: &[f64]) -> f64 {
        seed_log_density(moved, self.config.seed_edge_prob)
    }

    fn transform(&self, u: &Latent<SeedGraph>, theta: &[f64]) -> Result<Graph> {
        self.grow(u, theta)
    }

    fn distance(&self, y: &Graph, x: &Graph) -> Result<f64> {
        spectral_distance(y, x)
    }

    fn observed_distance(&self, u: &Latent<SeedGraph>, theta: &[f64]) -> Result<f64> {
        let x = self.grow(u, theta)?;
        spectrum_distance(&self.y_spectrum, &spectrum(&x)?)
    }

    fn move_latent<R: Rng + ?Sized>(
        &self,
        u: &mut Latent<SeedGraph>,
        theta: &[f64],
        epsilon: f64,
        distance: f64,
        cfg: &InnerMoveConfig,
        rng: &mut R,
    ) -> Result<(f64, MoveStats)> {
        if cfg.kind() != MoverKind::EdgeFlip {
            return Err(Error::InvalidConfig(
                "the graph model moves its seed by edge add/delete proposals".into(),
            ));
        }
        let mut stats = MoveStats::default();
        let mut current = distance;
        for _ in 0..cfg.sweeps() {
            let (d, accepted) = seed_edge_flip_move(self, u, theta, epsilon, current, rng)?;
            stats.proposed += 1;
            stats.accepted += accepted as u64;
            current = d;
        }
        Ok((current, stats))
    }
}

/// Relative margin on the edge-count bound, covering rounding in the eigensolver.
const SCREEN_TOL: f64 = 1e-9;

/// One Metropolis-Hastings add/delete update of the seed edges.
///
/// Add and delete are chosen with probability 1/2 each; the edited pair is
/// uniform among non-edges (add) or edges (delete). Adding to a complete seed
/// or deleting from an empty one is a null self-transition. The acceptance
/// probability is `min(1, prior ratio * proposal ratio * 1{new distance <= eps})`;
/// the grown graph is only evaluated when the first two factors pass.
pub fn seed_edge_flip_move<R: Rng + ?Sized>(
    model: &GraphModel,
    u: &mut Latent<SeedGraph>,
    theta: &[f64],
    epsilon: f64,
    distance: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    let a = model.config.seed_edge_prob;
    let total = u.moved.pairs();
    let edges = u.moved.edge_count();
    let add = rng.random::<f64>() < 0.5;
    let (pair, log_ratio) = if add {
        if edges == total {
            return Ok((distance, false));
        }
        let rank = rng.random_range(0..total - edges);
        let log_ratio = a.ln() - (1.0 - a).ln() + ((total - edges) as f64).ln()
            - ((edges + 1) as f64).ln();
        (u.moved.nth_pair_with(false, rank), log_ratio)
    } else {
        if edges == 0 {
            return Ok((distance, false));
        }
        let rank = rng.random_range(0..edges);
        let log_ratio = (1.0 - a).ln() - a.ln() + (edges as f64).ln()
            - ((total - edges + 1) as f64).ln();
        (u.moved.nth_pair_with(true, rank), log_ratio)
    };
    let log_u = rng.random::<f64>().ln();
    if !(log_u < log_ratio) {
        return Ok((distance, false));
    }
    u.moved.toggle(pair);
    let x = model.grow(u, theta)?;
    // Both spectra have squared norm 2|E|, so the norm gap bounds the distance from below.
    let gap = ((2 * model.y.edge_count()) as f64).sqrt() - ((2 * x.edge_count()) as f64).sqrt();
    if gap * gap > epsilon * (1.0 + SCREEN_TOL) {
        u.moved.toggle(pair);
        return Ok((distance, false));
    }
    let proposed = spectrum_distance(&model.y_spectrum, &spectrum(&x)?)?;
    if proposed <= epsilon {
        Ok((proposed, true))
    } else {
        u.moved.toggle(pair);
        Ok((distance, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pair_indexing_is_row_major() {
        let n = 5;
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                assert_eq!(pair_index(n, i, j), k);
                k += 1;
            }
        }
        assert_eq!(k, pair_count(n));
    }

    #[test]
    fn seed_extremes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(seed_graph_sample(10, 0.0, &mut rng).edge_count(), 0);
        assert_eq!(seed_graph_sample(10, 1.0, &mut rng).edge_count(), 45);
    }

    #[test]
    fn seed_edge_count_mean() {
        // Binomial(190, 0.3): mean 57, variance 39.9; mean of 1e4 draws at 4 sigma.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = 10_000;
        let total: usize = (0..n).map(|_| seed_graph_sample(20, 0.3, &mut rng).edge_count()).sum();
        let mean = total as f64 / n as f64;
        let se = (190.0 * 0.3 * 0.7 / n as f64).sqrt();
        assert!((mean - 57.0).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn grow_with_zero_probabilities_leaves_isolated_nodes() {
        let seed = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let g = dd_grow(&seed, 0.0, 0.0, 30, &UnitStream::Keyed(4)).unwrap();
        assert_eq!(g.nodes(), 30);
        assert_eq!(g.edge_count(), 2);
        for v in 3..30 {
            assert!(g.neighbors(v).is_empty());
        }
    }

    #[test]
    fn grow_with_unit_probabilities_copies_neighbourhoods() {
        let seed = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        // Node choices 0.9 -> node 2 (of 3), then 0.1 -> node 0 (of 4).
        // Retention and link draws are all 0.5 < 1.
        let stream = UnitStream::Recorded(vec![0.9, 0.5, 0.5, 0.1, 0.5, 0.5]);
        let g = dd_grow(&seed, 1.0, 1.0, 5, &stream).unwrap();
        // Step 1: node 3 copies node 2 (neighbour 1) and links to 2.
        assert_eq!(g.neighbors(3), &[1, 2]);
        // Step 2: node 4 copies node 0 (neighbour 1) and links to 0.
        assert_eq!(g.neighbors(4), &[0, 1]);
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn grow_matches_hand_replay() {
        // Seed: single edge 0-1; p = 0.5, r = 0.2; grow to 4 nodes.
        // Step n=2: u=0.7 -> parent 1; neighbour 0: u=0.3 < 0.5 keep (0,2); link u=0.9 no.
        // Step n=3: u=0.1 -> parent 0; neighbours of 0 are [1, 2]:
        //   u=0.6 >= 0.5 drop (1,3); u=0.4 keep (2,3); link u=0.15 < 0.2 -> (0,3).
        let seed = Graph::from_edges(2, [(0, 1)]).unwrap();
        let stream = UnitStream::Recorded(vec![0.7, 0.3, 0.9, 0.1, 0.6, 0.4, 0.15]);
        let g = dd_grow(&seed, 0.5, 0.2, 4, &stream).unwrap();
        let expected = Graph::from_edges(4, [(0, 1), (0, 2), (2, 3), (0, 3)]).unwrap();
        assert_eq!(g, expected);
        // One draw short: the replay stream is exhausted.
        let short = UnitStream::Recorded(vec![0.7, 0.3, 0.9, 0.1, 0.6, 0.4]);
        assert!(matches!(
            dd_grow(&seed, 0.5, 0.2, 4, &short),
            Err(Error::StreamExhausted { position: 6, .. })
        ));
    }

    #[test]
    fn spectral_distance_hand_case() {
        let empty = Graph::empty(2);
        let edge = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert!((spectral_distance(&empty, &edge).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(spectral_distance(&edge, &edge).unwrap(), 0.0);
        assert!(spectral_distance(&edge, &Graph::empty(3)).is_err());
    }

    #[test]
    fn trace_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for n in [5, 20, 60, 100] {
            let seed = seed_graph_sample(n.min(20), 0.3, &mut rng).to_graph();
            let g = dd_grow(&seed, 0.5, 0.2, n, &UnitStream::Keyed(n as u64)).unwrap();
            let s = spectrum(&g).unwrap();
            let trace: f64 = s.iter().sum();
            assert!(trace.abs() < 1e3 * f64::EPSILON * n as f64, "trace {trace}");
            let sq: f64 = s.iter().map(|v| v * v).sum();
            assert!((sq - 2.0 * g.edge_count() as f64).abs() < 1e-8 * n as f64);
        }
    }

    #[test]
    fn edge_list_round_trip_and_errors() {
        let g = Graph::from_edges(4, [(2, 3), (0, 1), (0, 3)]).unwrap();
        let text = g.to_edge_list();
        assert_eq!(text, "nodes 4\n0 1\n0 3\n2 3\n");
        assert_eq!(Graph::parse_edge_list(&text).unwrap(), g);
        assert!(Graph::parse_edge_list("nodes 2\n1 0\n").is_err());
        assert!(Graph::parse_edge_list("2\n0 1\n").is_err());
        assert!(Graph::parse_edge_list("nodes 2\n0 5\n").is_err());
    }

    #[test]
    fn flip_move_null_transitions_and_rejection() {
        let config = GraphModelConfig {
            d: 8,
            seed_nodes: 4,
            ..GraphModelConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let y = GraphModel::synthesize(&config, &mut rng).unwrap();
        let model = GraphModel::new(config, y).unwrap();
        let theta = [0.5, 0.2];

        // Empty seed: every delete proposal is a null move, so nothing is ever deleted.
        let mut u = LatentRandomness {
            moved: SeedGraph::empty(4),
            fixed: UnitStream::Keyed(3),
        };
        let d0 = model.observed_distance(&u, &theta).unwrap();
        for _ in 0..50 {
            let before = u.clone();
            let (d, acc) = seed_edge_flip_move(&model, &mut u, &theta, f64::INFINITY, d0, &mut rng).unwrap();
            if !acc {
                assert_eq!(u, before);
                assert_eq!(d, d0);
            }
            u = before;
        }

        // Tolerance equal to the current distance with a state no flip can keep: reject.
        let mut u = model.sample_latent(&theta, &mut rng);
        let d = model.observed_distance(&u, &theta).unwrap();
        let before = u.clone();
        for _ in 0..100 {
            let (nd, acc) = seed_edge_flip_move(&model, &mut u, &theta, d, d, &mut rng).unwrap();
            assert!(nd <= d);
            if !acc {
                assert_eq!(nd, d);
            }
            u = before.clone();
        }
    }

    #[test]
    fn canonical_bytes_layout() {
        let mut s = SeedGraph::empty(4);
        s.set(0, true);
        s.set(5, true);
        let bytes = s.to_canonical_bytes();
        assert_eq!(bytes, vec![4, 0, 0, 0, 0b0010_0001]);
        assert_eq!(SeedGraph::from_canonical_bytes(&bytes).unwrap(), s);
    }

    proptest! {
        #[test]
        fn growth_is_deterministic(seed in any::<u64>(), key in any::<u64>(), p in 0.0f64..1.0, r in 0.0f64..1.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = seed_graph_sample(6, 0.4, &mut rng).to_graph();
            let a = dd_grow(&s, p, r, 25, &UnitStream::Keyed(key)).unwrap();
            let b = dd_grow(&s, p, r, 25, &UnitStream::Keyed(key)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn seed_bytes_round_trip(seed in any::<u64>(), n in 2usize..25) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = seed_graph_sample(n, 0.5, &mut rng);
            prop_assert_eq!(SeedGraph::from_canonical_bytes(&s.to_canonical_bytes()).unwrap(), s);
        }

        #[test]
        fn spectral_distance_symmetric_and_isomorphism_invariant(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g1 = dd_grow(&seed_graph_sample(6, 0.3, &mut rng).to_graph(), 0.5, 0.2, 20, &UnitStream::Keyed(rng.random())).unwrap();
            let g2 = dd_grow(&seed_graph_sample(6, 0.3, &mut rng).to_graph(), 0.5, 0.2, 20, &UnitStream::Keyed(rng.random())).unwrap();
            let mut perm: Vec<usize> = (0..20).collect();
            perm.shuffle(&mut rng);
            let d12 = spectral_distance(&g1, &g2).unwrap();
            prop_assert!((d12 - spectral_distance(&g2, &g1).unwrap()).abs() < 1e-9);
            prop_assert!((d12 - spectral_distance(&g1, &g2.permuted(&perm)).unwrap()).abs() < 1e-9);
            prop_assert!(spectral_distance(&g1, &g1.permuted(&perm)).unwrap() < 1e-9);
        }

        #[test]
        fn distance_bounded_below_by_edge_counts(seed in any::<u64>(), p in 0.0..1.0f64, r in 0.0..1.0f64) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g1 = dd_grow(&seed_graph_sample(6, 0.3, &mut rng).to_graph(), 0.5, 0.2, 25, &UnitStream::Keyed(rng.random())).unwrap();
            let g2 = dd_grow(&seed_graph_sample(6, 0.6, &mut rng).to_graph(), p, r, 25, &UnitStream::Keyed(rng.random())).unwrap();
            let gap = ((2 * g1.edge_count()) as f64).sqrt() - ((2 * g2.edge_count()) as f64).sqrt();
            prop_assert!(spectral_distance(&g1, &g2).unwrap() >= gap * gap * (1.0 - 1e-12));
        }
    }
}
