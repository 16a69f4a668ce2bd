//! Undirected simple graphs stored as a sorted edge list with a CSR
//! adjacency index. The adjacency matrix view is symmetric 0/1 with a zero
//! diagonal.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest node count for which a dense adjacency matrix may be
/// materialized (16 MiB of f64 at the cap).
pub const MAX_DENSE: usize = 4096;

#[derive(Clone, Debug)]
pub struct Graph {
    n: usize,
    /// Unordered pairs stored as (i, j) with i < j, sorted lexicographically.
    edges: Vec<(u32, u32)>,
    /// CSR over both directions: neighbors of v are adj[xadj[v]..xadj[v+1]].
    xadj: Vec<usize>,
    adj: Vec<u32>,
}

impl Graph {
    /// Build a graph from unordered edge pairs. Each pair must satisfy
    /// 0 <= i < j < n; duplicates are rejected.
    pub fn from_edges(n: usize, mut edges: Vec<(u32, u32)>) -> Result<Self> {
        for &(i, j) in &edges {
            if i >= j {
                return Err(Error::parameter(format!(
                    "edge ({i}, {j}) must satisfy i < j"
                )));
            }
            if (j as usize) >= n {
                return Err(Error::parameter(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::parameter("duplicate edge in input"));
        }

        let mut deg = vec![0usize; n];
        for &(i, j) in &edges {
            deg[i as usize] += 1;
            deg[j as usize] += 1;
        }
        let mut xadj = Vec::with_capacity(n + 1);
        xadj.push(0usize);
        for d in &deg {
            xadj.push(xadj.last().unwrap() + d);
        }
        let mut cursor = xadj[..n].to_vec();
        let mut adj = vec![0u32; 2 * edges.len()];
        for &(i, j) in &edges {
            adj[cursor[i as usize]] = j;
            cursor[i as usize] += 1;
            adj[cursor[j as usize]] = i;
            cursor[j as usize] += 1;
        }
        // Neighbor lists come out sorted because edges are sorted and each
        // endpoint receives strictly increasing partners per direction pass;
        // sort defensively is unnecessary for i->j but j->i appends i in
        // increasing i order as well.
        Ok(Graph { n, edges, xadj, adj })
    }

    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: Vec::new(),
            xadj: vec![0; n + 1],
            adj: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adj[self.xadj[v]..self.xadj[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.xadj[v + 1] - self.xadj[v]
    }

    /// Row sums of the adjacency matrix.
    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|v| self.degree(v)).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    /// Dense adjacency matrix; refused above [`MAX_DENSE`] nodes.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.n > MAX_DENSE {
            return Err(Error::parameter(format!(
                "dense materialization capped at n = {MAX_DENSE} (got {})",
                self.n
            )));
        }
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            m[(i as usize, j as usize)] = 1.0;
            m[(j as usize, i as usize)] = 1.0;
        }
        Ok(m)
    }

    /// Write the edge list as ASCII "i j" lines. When `header` is set the
    /// first line is "n k".
    pub fn write_edge_list<W: Write>(&self, w: &mut W, header: Option<usize>) -> Result<()> {
        if let Some(k) = header {
            writeln!(w, "{} {}", self.n, k)?;
        }
        for &(i, j) in &self.edges {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }

    /// Parse an edge list. With `header` set, the first line must be "n k"
    /// and `(graph, Some(k))` is returned; otherwise `n` must be supplied.
    pub fn read_edge_list<R: BufRead>(
        r: R,
        header: bool,
        n: Option<usize>,
    ) -> Result<(Self, Option<usize>)> {
        let mut lines = r.lines();
        let mut k_out = None;
        let n = if header {
            let first = lines
                .next()
                .ok_or_else(|| Error::parameter("empty edge-list file"))??;
            let mut it = first.split_whitespace();
            let n: usize = parse_field(it.next(), "n")?;
            let k: usize = parse_field(it.next(), "k")?;
            k_out = Some(k);
            n
        } else {
            n.ok_or_else(|| Error::parameter("node count required when no header present"))?
        };
        let mut edges = Vec::new();
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let mut it = t.split_whitespace();
            let i: u32 = parse_field(it.next(), "edge endpoint")?;
            let j: u32 = parse_field(it.next(), "edge endpoint")?;
            edges.push((i, j));
        }
        Ok((Graph::from_edges(n, edges)?, k_out))
    }
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::parameter(format!("missing {what}")))?
        .parse::<T>()
        .map_err(|_| Error::parameter(format!("malformed {what}")))
}
