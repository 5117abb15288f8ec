//! Dense simple graphs with bit-packed adjacency rows and incrementally
//! maintained edge and triangle counts.
//!
//! The common-neighbor count `L_ij` (the number of 2-stars based at the
//! pair `{i,j}`) is the triangle delta of flipping that edge, and it is
//! evaluated on every MCMC step. Storing one bit row per vertex makes it
//! a word-parallel AND/popcount over two rows.

use rand::Rng;

/// Errors from constructing a [`Graph`] out of an explicit edge list.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("vertex {v} out of range for a graph on {n} vertices")]
    VertexOutOfRange { v: usize, n: usize },
    #[error("pair ({v},{v}) touches the diagonal; self-loops are not representable")]
    Diagonal { v: usize },
    #[error("duplicate edge ({i},{j})")]
    DuplicateEdge { i: usize, j: usize },
    #[error("a graph needs at least one vertex")]
    ZeroVertices,
}

/// Simple undirected graph on `n` labelled vertices.
///
/// Invariants maintained by every operation:
/// * the adjacency is symmetric with an empty diagonal,
/// * `edge_count` equals the number of set unordered pairs,
/// * `triangle_count` equals the full recount over all vertex triples.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Graph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    edges: u64,
    triangles: u64,
}

impl Graph {
    /// Empty graph on `n >= 1` vertices.
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::ZeroVertices);
        }
        let words = n.div_ceil(64);
        Ok(Graph {
            n,
            words,
            rows: vec![0u64; n * words],
            edges: 0,
            triangles: 0,
        })
    }

    /// Graph with exactly the given edges. Pairs must satisfy
    /// `i < j < n` and contain no duplicates.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Graph::empty(n)?;
        for &(i, j) in edges {
            if i == j {
                return Err(GraphError::Diagonal { v: i });
            }
            let v = i.max(j);
            if v >= n {
                return Err(GraphError::VertexOutOfRange { v, n });
            }
            if g.has_edge(i, j) {
                return Err(GraphError::DuplicateEdge { i, j });
            }
            g.flip_edge(i, j);
        }
        Ok(g)
    }

    /// Independent Bernoulli(`prob`) draw of each edge.
    pub fn bernoulli<R: Rng + ?Sized>(n: usize, prob: f64, rng: &mut R) -> Result<Self, GraphError> {
        assert!((0.0..=1.0).contains(&prob), "edge probability must lie in [0,1]");
        let mut g = Graph::empty(n)?;
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(prob) {
                    g.flip_edge(i, j);
                }
            }
        }
        Ok(g)
    }

    /// Number of vertices.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of unordered vertex pairs, `n(n-1)/2`.
    #[inline]
    pub fn pair_count(&self) -> u64 {
        (self.n as u64) * (self.n as u64 - 1) / 2
    }

    #[inline]
    pub fn edge_count(&self) -> u64 {
        self.edges
    }

    #[inline]
    pub fn triangle_count(&self) -> u64 {
        self.triangles
    }

    /// Edge and triangle densities `(2E/n^2, 6T/n^3)`.
    #[inline]
    pub fn densities(&self) -> (f64, f64) {
        let nf = self.n as f64;
        (
            2.0 * self.edges as f64 / (nf * nf),
            6.0 * self.triangles as f64 / (nf * nf * nf),
        )
    }

    #[inline]
    fn check_pair(&self, i: usize, j: usize) {
        assert!(i != j, "pair ({i},{i}) touches the diagonal");
        assert!(
            i < self.n && j < self.n,
            "vertex pair ({i},{j}) out of range for n={}",
            self.n
        );
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.check_pair(i, j);
        self.rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// Number of vertices `k` adjacent to both `i` and `j` (the 2-star
    /// count `L_ij`). Independent of whether the edge `ij` itself is
    /// present: the diagonal bits are always clear, so the row AND can
    /// never pick up `i` or `j`.
    #[inline]
    pub fn common_neighbors(&self, i: usize, j: usize) -> u64 {
        self.check_pair(i, j);
        let ri = &self.rows[i * self.words..(i + 1) * self.words];
        let rj = &self.rows[j * self.words..(j + 1) * self.words];
        let mut c = 0u64;
        for w in 0..self.words {
            c += (ri[w] & rj[w]).count_ones() as u64;
        }
        c
    }

    /// Toggle edge `ij` when the 2-star count `l = L_ij` has already
    /// been computed on the current graph, so the caller pays for a
    /// single row AND per MCMC step. Returns `true` when the edge was
    /// added. The triangle cache moves by exactly `l`.
    #[inline]
    pub fn apply_flip(&mut self, i: usize, j: usize, l: u64) -> bool {
        self.check_pair(i, j);
        debug_assert_eq!(l, self.common_neighbors(i, j));
        let mask_j = 1u64 << (j % 64);
        let word_ij = i * self.words + j / 64;
        let added = self.rows[word_ij] & mask_j == 0;
        self.rows[word_ij] ^= mask_j;
        self.rows[j * self.words + i / 64] ^= 1u64 << (i % 64);
        if added {
            self.edges += 1;
            self.triangles += l;
        } else {
            self.edges -= 1;
            self.triangles -= l;
        }
        added
    }

    /// Toggle edge `ij`. Returns `(added, l)` where `l` is the 2-star
    /// count on the pre-flip graph (equal to the absolute triangle delta).
    pub fn flip_edge(&mut self, i: usize, j: usize) -> (bool, u64) {
        let l = self.common_neighbors(i, j);
        let added = self.apply_flip(i, j, l);
        (added, l)
    }
}

/// Unordered vertex pairs of an `n`-vertex graph in lexicographic order.
/// The index of a pair in this list is the shared edge-index convention
/// used by the sampler and the exhaustive enumerator.
pub fn pair_list(n: usize) -> Vec<(u32, u32)> {
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i as u32, j as u32));
        }
    }
    pairs
}
