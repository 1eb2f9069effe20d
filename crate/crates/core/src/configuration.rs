//! Edge configurations, boundary conditions and cluster structure.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{DualMap, Lattice, LatticeId};
use crate::union_find::UnionFind;

/// Bit-packed open/closed edge states (1 = open) over a lattice's edges.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    lattice: LatticeId,
    len: usize,
    words: Vec<u64>,
}

impl Configuration {
    pub fn closed(lattice: &Lattice) -> Self {
        Self::with_len(lattice.id(), lattice.n_edges())
    }

    pub fn open(lattice: &Lattice) -> Self {
        let mut c = Self::closed(lattice);
        for e in 0..c.len {
            c.set(e, true);
        }
        c
    }

    pub(crate) fn with_len(lattice: LatticeId, len: usize) -> Self {
        Self {
            lattice,
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    /// Configuration whose bit `e` is bit `e` of `index`.
    pub fn from_index(lattice: &Lattice, index: u64) -> Self {
        let mut c = Self::closed(lattice);
        c.load_index(index);
        c
    }

    /// Overwrites the states from the low bits of `index` (`len ≤ 64`).
    pub fn load_index(&mut self, index: u64) {
        debug_assert!(self.len <= 64);
        if let Some(w) = self.words.first_mut() {
            *w = if self.len == 64 { index } else { index & ((1u64 << self.len) - 1) };
        }
    }

    pub fn from_bits(lattice: &Lattice, bits: &[bool]) -> Result<Self> {
        if bits.len() != lattice.n_edges() {
            return Err(Error::LatticeMismatch {
                expected: lattice.n_edges(),
                got: bits.len(),
            });
        }
        let mut c = Self::closed(lattice);
        for (e, &b) in bits.iter().enumerate() {
            c.set(e, b);
        }
        Ok(c)
    }

    pub fn from_open_edges(lattice: &Lattice, open: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::closed(lattice);
        for e in open {
            c.set(e, true);
        }
        c
    }

    pub fn lattice_id(&self) -> LatticeId {
        self.lattice
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_open(&self, e: usize) -> bool {
        (self.words[e >> 6] >> (e & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, e: usize, open: bool) {
        let mask = 1u64 << (e & 63);
        if open {
            self.words[e >> 6] |= mask;
        } else {
            self.words[e >> 6] &= !mask;
        }
    }

    pub fn flip(&mut self, e: usize) {
        self.words[e >> 6] ^= 1u64 << (e & 63);
    }

    /// Number of open edges, `o(ω)`.
    pub fn count_open(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_closed(&self) -> usize {
        self.len - self.count_open()
    }

    pub fn open_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&e| self.is_open(e))
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn check(&self, lattice: &Lattice) -> Result<()> {
        if self.len != lattice.n_edges() || self.lattice != lattice.id() {
            return Err(Error::LatticeMismatch {
                expected: lattice.n_edges(),
                got: self.len,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    Free,
    Wired,
    Periodic,
    Mixed,
}

/// A partition of the boundary: each class is wired together, every other
/// boundary vertex is free. Periodic is a tag; the torus topology carries it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    kind: BcKind,
    classes: Vec<Vec<usize>>,
}

impl BoundaryCondition {
    pub fn free() -> Self {
        Self {
            kind: BcKind::Free,
            classes: Vec::new(),
        }
    }

    pub fn periodic() -> Self {
        Self {
            kind: BcKind::Periodic,
            classes: Vec::new(),
        }
    }

    pub fn wired(lattice: &Lattice) -> Self {
        let boundary = lattice.boundary().to_vec();
        Self {
            kind: BcKind::Wired,
            classes: if boundary.is_empty() { Vec::new() } else { vec![boundary] },
        }
    }

    /// Mixed wiring; validates that classes are disjoint subsets of `∂G`.
    pub fn mixed(lattice: &Lattice, classes: Vec<Vec<usize>>) -> Result<Self> {
        let bc = Self {
            kind: BcKind::Mixed,
            classes: classes.into_iter().filter(|c| !c.is_empty()).collect(),
        };
        bc.validate(lattice)?;
        Ok(bc)
    }

    /// The natural condition for a lattice: periodic on tori, free otherwise.
    pub fn default_for(lattice: &Lattice) -> Self {
        if lattice.is_torus() {
            Self::periodic()
        } else {
            Self::free()
        }
    }

    pub fn kind(&self) -> BcKind {
        self.kind
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        let mut seen = vec![false; lattice.n_vertices()];
        for class in &self.classes {
            for &v in class {
                if v >= lattice.n_vertices() || !lattice.is_boundary(v) {
                    return invalid(format!("wired vertex {v} is not on the boundary"));
                }
                if seen[v] {
                    return invalid(format!("vertex {v} appears in two wired classes"));
                }
                seen[v] = true;
            }
        }
        if self.kind == BcKind::Periodic && !lattice.is_torus() {
            return invalid("periodic boundary condition requires a torus");
        }
        Ok(())
    }

    /// Class index of each vertex, or `u32::MAX` if free.
    pub fn class_of(&self, n_vertices: usize) -> Vec<u32> {
        let mut out = vec![u32::MAX; n_vertices];
        for (k, class) in self.classes.iter().enumerate() {
            for &v in class {
                out[v] = k as u32;
            }
        }
        out
    }

    /// True if `self` refines `other`: every class of `self` lies within one
    /// class of `other`, i.e. `self ≤ other` in the wiring order.
    pub fn refines(&self, other: &BoundaryCondition, n_vertices: usize) -> bool {
        let other_class = other.class_of(n_vertices);
        self.classes.iter().all(|class| {
            let first = other_class[class[0]];
            first != u32::MAX && class.iter().all(|&v| other_class[v] == first)
                || class.len() == 1
        })
    }
}

/// Components of `ω ∪ ξ`: a union-find over vertices plus one virtual node
/// per wired class.
#[derive(Clone, Debug)]
pub struct ClusterStructure {
    uf: UnionFind,
    n_vertices: usize,
    k: usize,
}

impl ClusterStructure {
    pub fn new(lattice: &Lattice, config: &Configuration, bc: &BoundaryCondition) -> Result<Self> {
        config.check(lattice)?;
        bc.validate(lattice)?;
        let mut cs = Self {
            uf: UnionFind::new(0),
            n_vertices: 0,
            k: 0,
        };
        cs.rebuild(lattice, config, bc);
        Ok(cs)
    }

    /// Recomputes in place without validation (hot path).
    pub fn rebuild(&mut self, lattice: &Lattice, config: &Configuration, bc: &BoundaryCondition) {
        let n = lattice.n_vertices();
        let classes = bc.classes();
        self.uf.reset(n + classes.len());
        self.n_vertices = n;
        let mut k = n;
        for (c, class) in classes.iter().enumerate() {
            for &v in class {
                self.uf.union(n + c, v);
            }
            // Each class joins its members into one component.
            k -= class.len() - 1;
        }
        for e in config.open_edges() {
            let (a, b) = lattice.edge(e);
            if self.uf.union(a, b) {
                k -= 1;
            }
        }
        self.k = k;
    }

    /// Number of connected components `k(ω, ξ)`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn find(&mut self, v: usize) -> usize {
        self.uf.find(v)
    }

    pub fn connected(&mut self, a: usize, b: usize) -> bool {
        self.uf.same(a, b)
    }

    /// Root of the component of a wired class.
    pub fn class_root(&mut self, class: usize) -> usize {
        self.uf.find(self.n_vertices + class)
    }

    /// Component label per vertex, numbered `0..k` in order of first vertex.
    pub fn labels(&mut self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.uf.len()];
        let mut next = 0;
        (0..self.n_vertices)
            .map(|v| {
                let r = self.uf.find(v);
                if map[r] == usize::MAX {
                    map[r] = next;
                    next += 1;
                }
                map[r]
            })
            .collect()
    }
}

/// Number of components `k(ω, ξ)`.
pub fn cluster_count(lattice: &Lattice, config: &Configuration, bc: &BoundaryCondition) -> Result<usize> {
    Ok(ClusterStructure::new(lattice, config, bc)?.k())
}

/// The dual configuration: a dual edge is open iff its primal edge is closed.
pub fn dual_configuration(config: &Configuration, dual: &DualMap) -> Result<Configuration> {
    if config.len() != dual.edge_to_dual.len() {
        return Err(Error::LatticeMismatch {
            expected: dual.edge_to_dual.len(),
            got: config.len(),
        });
    }
    let mut out = Configuration::closed(&dual.dual);
    for (e, &f) in dual.edge_to_dual.iter().enumerate() {
        out.set(f, !config.is_open(e));
    }
    Ok(out)
}

/// Maps a dual configuration back to the primal lattice.
pub fn primal_configuration(dual_config: &Configuration, dual: &DualMap, primal: &Lattice) -> Result<Configuration> {
    if dual_config.len() != dual.dual_to_edge.len() {
        return Err(Error::LatticeMismatch {
            expected: dual.dual_to_edge.len(),
            got: dual_config.len(),
        });
    }
    let mut out = Configuration::closed(primal);
    for (f, &e) in dual.dual_to_edge.iter().enumerate() {
        out.set(e, !dual_config.is_open(f));
    }
    Ok(out)
}

/// `x ↔ y` in `ω ∪ ξ`.
pub fn connected(
    lattice: &Lattice,
    config: &Configuration,
    bc: &BoundaryCondition,
    x: usize,
    y: usize,
) -> Result<bool> {
    if x >= lattice.n_vertices() || y >= lattice.n_vertices() {
        return invalid(format!("vertex out of range ({x}, {y})"));
    }
    if x == y {
        return Ok(true);
    }
    Ok(ClusterStructure::new(lattice, config, bc)?.connected(x, y))
}

/// Increasing event `sources ↔ targets` using only vertices of `region`
/// (the whole lattice when `None`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionEvent {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub region: Option<Vec<usize>>,
}

impl ConnectionEvent {
    pub fn new(sources: Vec<usize>, targets: Vec<usize>) -> Self {
        Self {
            sources,
            targets,
            region: None,
        }
    }

    pub fn within(mut self, region: Vec<usize>) -> Self {
        self.region = Some(region);
        self
    }

    pub fn holds(&self, lattice: &Lattice, config: &Configuration, bc: &BoundaryCondition) -> Result<bool> {
        Ok(hamming_to_connection(lattice, config, bc, self)? == 0)
    }
}

/// Minimal number of closed edges whose opening makes `event` occur: a 0/1
/// shortest path where open edges (and boundary wiring) cost 0 and closed
/// edges cost 1.
pub fn hamming_to_connection(
    lattice: &Lattice,
    config: &Configuration,
    bc: &BoundaryCondition,
    event: &ConnectionEvent,
) -> Result<u32> {
    config.check(lattice)?;
    let n = lattice.n_vertices();
    if event.sources.is_empty() || event.targets.is_empty() {
        return invalid("connection event needs non-empty source and target sets");
    }
    if event.sources.iter().chain(&event.targets).any(|&v| v >= n) {
        return invalid("connection event vertex out of range");
    }
    let mut allowed = vec![event.region.is_none(); n];
    if let Some(region) = &event.region {
        for &v in region {
            allowed[v] = true;
        }
    }
    let class_of = bc.class_of(n);
    let classes = bc.classes();
    let n_nodes = n + classes.len();
    let mut is_target = vec![false; n];
    for &t in &event.targets {
        is_target[t] = true;
    }
    let mut dist = vec![u32::MAX; n_nodes];
    let mut deque = VecDeque::new();
    for &s in &event.sources {
        if allowed[s] && dist[s] != 0 {
            dist[s] = 0;
            deque.push_front(s);
        }
    }
    while let Some(node) = deque.pop_front() {
        let d = dist[node];
        if node < n {
            if is_target[node] {
                return Ok(d);
            }
            if class_of[node] != u32::MAX {
                let vnode = n + class_of[node] as usize;
                if dist[vnode] > d {
                    dist[vnode] = d;
                    deque.push_front(vnode);
                }
            }
            for (w, e) in lattice.neighbors(node) {
                if !allowed[w] {
                    continue;
                }
                let nd = d + u32::from(!config.is_open(e));
                if nd < dist[w] {
                    dist[w] = nd;
                    if nd == d {
                        deque.push_front(w);
                    } else {
                        deque.push_back(w);
                    }
                }
            }
        } else {
            for &w in &classes[node - n] {
                if allowed[w] && dist[w] > d {
                    dist[w] = d;
                    deque.push_front(w);
                }
            }
        }
    }
    invalid("targets are unreachable from sources inside the region")
}
