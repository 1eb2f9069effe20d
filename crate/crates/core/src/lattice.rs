//! Finite lattices with planar embeddings, boundaries and dual graphs.
//!
//! Square-family lattices are the square lattice rotated by a quarter turn.
//! Their vertices carry integer *plane coordinates* on a checkerboard: a
//! primal site sits at `(x, y)` with `x + y` even, a dual site at `x + y`
//! odd, and every edge joins diagonal neighbours `(±1, ±1)`. Logical grid
//! coordinates `(i, j)` map to the plane by `(i - j, i + j)`. Rectangles
//! `[t, x) × [y, z)` are taken in plane coordinates, so a square `[0, n)²`
//! with `n` even has a dual that is the same graph turned by 90°.
//!
//! Triangular lattices use lozenge coordinates in the basis
//! `e1 = (√3/2, 1/2)`, `e2 = (0, 1)`. Hexagonal lattices are always built as
//! the dual of a triangular one; their plane coordinates are three times the
//! lozenge coordinates of the corresponding triangle centroid.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::union_find::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SquareBox,
    SquareTorus,
    Triangular,
    TriangularTorus,
    Hexagonal,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::SquareBox => "square_box",
            Family::SquareTorus => "square_torus",
            Family::Triangular => "triangular",
            Family::TriangularTorus => "triangular_torus",
            Family::Hexagonal => "hexagonal",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Family::SquareBox => 1,
            Family::SquareTorus => 2,
            Family::Triangular => 3,
            Family::TriangularTorus => 4,
            Family::Hexagonal => 5,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => Family::SquareBox,
            2 => Family::SquareTorus,
            3 => Family::Triangular,
            4 => Family::TriangularTorus,
            5 => Family::Hexagonal,
            _ => return None,
        })
    }
}

/// Half-open coordinate box `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RectSpec {
    pub x0: i64,
    pub x1: i64,
    pub y0: i64,
    pub y1: i64,
}

impl RectSpec {
    pub fn new(x0: i64, x1: i64, y0: i64, y1: i64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    /// The closed box `[a, b] × [c, d]`.
    pub fn closed(a: i64, b: i64, c: i64, d: i64) -> Self {
        Self::new(a, b + 1, c, d + 1)
    }

    /// `[x, x + w) × [y, y + h)`.
    pub fn at(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self::new(x, x + w, y, y + h)
    }

    pub fn width(&self) -> i64 {
        (self.x1 - self.x0).max(0)
    }

    pub fn height(&self) -> i64 {
        (self.y1 - self.y0).max(0)
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }

    pub fn contains(&self, p: (i64, i64)) -> bool {
        p.0 >= self.x0 && p.0 < self.x1 && p.1 >= self.y0 && p.1 < self.y1
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Self {
        Self::new(self.x0 + dx, self.x1 + dx, self.y0 + dy, self.y1 + dy)
    }

    /// Swaps the roles of the two axes.
    pub fn transpose(&self) -> Self {
        Self::new(self.y0, self.y1, self.x0, self.x1)
    }
}

/// Size parameters of a lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Size {
    /// `n × n` logical grid (square boxes, triangular lozenges).
    Box { n: usize },
    /// `m × m` periodic grid.
    Torus { m: usize },
    /// All square-lattice sites inside a plane-coordinate rectangle.
    Region { rect: RectSpec },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeId(pub u64);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeDescriptor {
    pub family: Family,
    pub size: Size,
    pub vertex_count: usize,
    pub edge_count: usize,
}

/// Immutable indexed graph with a planar embedding.
#[derive(Clone, Debug)]
pub struct Lattice {
    family: Family,
    size: Size,
    /// Checkerboard parity of the square-family embedding (0 primal, 1 dual).
    parity: i64,
    pos: Vec<(i64, i64)>,
    edges: Vec<(u32, u32)>,
    edge_delta: Vec<(i64, i64)>,
    adj_start: Vec<usize>,
    adj: Vec<(u32, u32)>,
    boundary: Vec<usize>,
    is_boundary: Vec<bool>,
    lookup: HashMap<(i64, i64), u32>,
    id: LatticeId,
}

/// Vertices and edges of a lattice lying inside a rectangle, with local
/// plane coordinates that are unambiguous even on a torus.
#[derive(Clone, Debug)]
pub struct RectView {
    pub rect: RectSpec,
    /// Lattice vertex index for each local vertex.
    pub vertices: Vec<usize>,
    /// Plane coordinates of each local vertex inside `rect`.
    pub coords: Vec<(i64, i64)>,
    /// `(edge index, local a, local b)` for edges with both ends inside.
    pub edges: Vec<(usize, usize, usize)>,
    /// Local adjacency: `(neighbour local index, edge index)`.
    pub adj: Vec<Vec<(usize, usize)>>,
    grid: Vec<u32>,
}

impl RectView {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Local index of the vertex at local plane coordinates `p`, if any.
    pub fn local_at(&self, p: (i64, i64)) -> Option<usize> {
        if !self.rect.contains(p) {
            return None;
        }
        let w = self.rect.width();
        let idx = ((p.1 - self.rect.y0) * w + (p.0 - self.rect.x0)) as usize;
        match self.grid[idx] {
            u32::MAX => None,
            l => Some(l as usize),
        }
    }

    pub fn min_x(&self) -> i64 {
        self.coords.iter().map(|c| c.0).min().unwrap_or(self.rect.x0)
    }

    pub fn max_x(&self) -> i64 {
        self.coords.iter().map(|c| c.0).max().unwrap_or(self.rect.x0)
    }

    pub fn min_y(&self) -> i64 {
        self.coords.iter().map(|c| c.1).min().unwrap_or(self.rect.y0)
    }

    pub fn max_y(&self) -> i64 {
        self.coords.iter().map(|c| c.1).max().unwrap_or(self.rect.y0)
    }
}

/// Dual lattice together with the primal-to-dual edge bijection.
#[derive(Clone, Debug)]
pub struct DualMap {
    pub dual: Lattice,
    pub edge_to_dual: Vec<usize>,
    pub dual_to_edge: Vec<usize>,
}

const SQUARE_STEPS: [(i64, i64); 2] = [(1, 1), (-1, 1)];
const TRIANGULAR_STEPS: [(i64, i64); 3] = [(1, 0), (0, 1), (-1, 1)];

struct Builder {
    pos: Vec<(i64, i64)>,
    edges: Vec<(u32, u32)>,
    edge_delta: Vec<(i64, i64)>,
}

impl Lattice {
    /// Builds a lattice of the given family.
    pub fn build(family: Family, size: Size) -> Result<Self> {
        match (family, size) {
            (Family::SquareBox, Size::Box { n }) => Self::square_box(n),
            (Family::SquareBox, Size::Region { rect }) => Self::square_region(rect),
            (Family::SquareTorus, Size::Torus { m }) => Self::square_torus(m),
            (Family::Triangular, Size::Box { n }) => Self::triangular(n),
            (Family::TriangularTorus, Size::Torus { m }) => Self::triangular_torus(m),
            (Family::Hexagonal, Size::Box { n }) => Self::hexagonal(n),
            (Family::Hexagonal, Size::Torus { m }) => Self::hexagonal_torus(m),
            (f, s) => invalid(format!("size {s:?} does not apply to family {}", f.name())),
        }
    }

    /// `n × n` logical grid of the rotated square lattice.
    pub fn square_box(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("square box size must be positive");
        }
        let n = n as i64;
        let mut b = Builder::new();
        for j in 0..n {
            for i in 0..n {
                b.pos.push((i - j, i + j));
            }
        }
        for j in 0..n {
            for i in 0..n {
                let v = (j * n + i) as u32;
                if i + 1 < n {
                    b.push_edge(v, (j * n + i + 1) as u32, SQUARE_STEPS[0]);
                }
                if j + 1 < n {
                    b.push_edge(v, ((j + 1) * n + i) as u32, SQUARE_STEPS[1]);
                }
            }
        }
        b.finish(Family::SquareBox, Size::Box { n: n as usize }, 0, 4)
    }

    /// Square-lattice sites inside a plane-coordinate rectangle, with all
    /// edges between them.
    pub fn square_region(rect: RectSpec) -> Result<Self> {
        if rect.is_empty() {
            return invalid("region must be non-empty");
        }
        let mut b = Builder::new();
        let mut index = HashMap::new();
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                if (x + y).rem_euclid(2) == 0 {
                    index.insert((x, y), b.pos.len() as u32);
                    b.pos.push((x, y));
                }
            }
        }
        if b.pos.is_empty() {
            return invalid("region contains no lattice site");
        }
        for v in 0..b.pos.len() {
            let (x, y) = b.pos[v];
            for step in SQUARE_STEPS {
                if let Some(&w) = index.get(&(x + step.0, y + step.1)) {
                    b.push_edge(v as u32, w, step);
                }
            }
        }
        b.finish(Family::SquareBox, Size::Region { rect }, 0, 4)
    }

    /// `m × m` torus of the rotated square lattice (primal embedding).
    pub fn square_torus(m: usize) -> Result<Self> {
        Self::square_torus_with_parity(m, 0)
    }

    fn square_torus_with_parity(m: usize, parity: i64) -> Result<Self> {
        if m < 2 {
            return invalid("square torus size must be at least 2");
        }
        let mi = m as i64;
        let mut b = Builder::new();
        for j in 0..mi {
            for i in 0..mi {
                b.pos.push((i - j + parity, i + j));
            }
        }
        for j in 0..mi {
            for i in 0..mi {
                let v = (j * mi + i) as u32;
                b.push_edge(v, (j * mi + (i + 1) % mi) as u32, SQUARE_STEPS[0]);
                b.push_edge(v, (((j + 1) % mi) * mi + i) as u32, SQUARE_STEPS[1]);
            }
        }
        b.finish(Family::SquareTorus, Size::Torus { m }, parity, 4)
    }

    /// `n × n` lozenge of the triangular lattice.
    pub fn triangular(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("triangular lozenge size must be positive");
        }
        let ni = n as i64;
        let mut b = Builder::new();
        for j in 0..ni {
            for i in 0..ni {
                b.pos.push((i, j));
            }
        }
        for j in 0..ni {
            for i in 0..ni {
                let v = (j * ni + i) as u32;
                for step in TRIANGULAR_STEPS {
                    let (a, c) = (i + step.0, j + step.1);
                    if (0..ni).contains(&a) && (0..ni).contains(&c) {
                        b.push_edge(v, (c * ni + a) as u32, step);
                    }
                }
            }
        }
        b.finish(Family::Triangular, Size::Box { n }, 0, 6)
    }

    pub fn triangular_torus(m: usize) -> Result<Self> {
        if m < 3 {
            return invalid("triangular torus size must be at least 3");
        }
        let mi = m as i64;
        let mut b = Builder::new();
        for j in 0..mi {
            for i in 0..mi {
                b.pos.push((i, j));
            }
        }
        for j in 0..mi {
            for i in 0..mi {
                let v = (j * mi + i) as u32;
                for step in TRIANGULAR_STEPS {
                    let a = (i + step.0).rem_euclid(mi);
                    let c = (j + step.1).rem_euclid(mi);
                    b.push_edge(v, (c * mi + a) as u32, step);
                }
            }
        }
        b.finish(Family::TriangularTorus, Size::Torus { m }, 0, 6)
    }

    /// Hexagonal lattice dual to the `n × n` triangular lozenge. Every
    /// boundary edge of the lozenge gets its own outer (degree-one) dual site,
    /// so the edge bijection with the lozenge is total.
    pub fn hexagonal(n: usize) -> Result<Self> {
        let tri = Self::triangular(n)?;
        Ok(Self::hexagonal_from(&tri))
    }

    /// Hexagonal torus dual to the `m × m` triangular torus.
    pub fn hexagonal_torus(m: usize) -> Result<Self> {
        let tri = Self::triangular_torus(m)?;
        Ok(Self::hexagonal_from(&tri))
    }

    fn hexagonal_from(tri: &Lattice) -> Lattice {
        let periodic = tri.family == Family::TriangularTorus;
        let size = tri.size;
        let wrap = |p: (i64, i64)| match size {
            Size::Torus { m } if periodic => {
                let mm = 3 * m as i64;
                (p.0.rem_euclid(mm), p.1.rem_euclid(mm))
            }
            _ => p,
        };
        // The two faces bordering each triangular edge, as 3 × centroid.
        let faces_of = |e: usize| -> ((i64, i64), (i64, i64)) {
            let (u, _) = tri.edges[e];
            let (i, j) = tri.pos[u as usize];
            match tri.edge_delta[e] {
                (1, 0) => ((3 * i + 1, 3 * j + 1), (3 * i + 2, 3 * j - 1)),
                (0, 1) => ((3 * i + 1, 3 * j + 1), (3 * i - 1, 3 * j + 2)),
                (-1, 1) => ((3 * i - 2, 3 * j + 1), (3 * i - 1, 3 * j + 2)),
                d => unreachable!("triangular edge with step {d:?}"),
            }
        };
        let mut face_pos: Vec<(i64, i64)> = Vec::new();
        for e in 0..tri.edges.len() {
            let (a, c) = faces_of(e);
            face_pos.push(wrap(a));
            face_pos.push(wrap(c));
        }
        face_pos.sort_by_key(|p| (p.1, p.0));
        face_pos.dedup();
        let index: HashMap<(i64, i64), u32> = face_pos
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, k as u32))
            .collect();
        let mut b = Builder::new();
        b.pos = face_pos;
        for e in 0..tri.edges.len() {
            let (up, down) = faces_of(e);
            let delta = (down.0 - up.0, down.1 - up.1);
            b.push_edge(index[&wrap(up)], index[&wrap(down)], delta);
        }
        b.finish(Family::Hexagonal, size, 0, 3)
            .expect("dual of a connected triangular lattice is connected")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn size(&self) -> Size {
        self.size
    }

    pub fn id(&self) -> LatticeId {
        self.id
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.size, Size::Torus { .. })
    }

    pub fn n_vertices(&self) -> usize {
        self.pos.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        let (a, b) = self.edges[e];
        (a as usize, b as usize)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().map(|&(a, b)| (a as usize, b as usize))
    }

    /// Geometric displacement from the first to the second endpoint.
    pub fn edge_delta(&self, e: usize) -> (i64, i64) {
        self.edge_delta[e]
    }

    /// `(neighbour, edge)` pairs incident to `v`.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj[self.adj_start[v]..self.adj_start[v + 1]]
            .iter()
            .map(|&(w, e)| (w as usize, e as usize))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj_start[v + 1] - self.adj_start[v]
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.is_boundary[v]
    }

    /// Plane coordinates (canonical representative on a torus).
    pub fn position(&self, v: usize) -> (i64, i64) {
        self.pos[v]
    }

    /// Euclidean position at unit mesh.
    pub fn physical(&self, v: usize) -> (f64, f64) {
        self.physical_of(self.pos[v])
    }

    pub fn physical_of(&self, p: (i64, i64)) -> (f64, f64) {
        let (x, y) = (p.0 as f64, p.1 as f64);
        match self.family {
            Family::SquareBox | Family::SquareTorus => {
                (x * std::f64::consts::FRAC_1_SQRT_2, y * std::f64::consts::FRAC_1_SQRT_2)
            }
            Family::Triangular | Family::TriangularTorus => {
                (x * 3f64.sqrt() / 2.0, x / 2.0 + y)
            }
            Family::Hexagonal => {
                let (x, y) = (x / 3.0, y / 3.0);
                (x * 3f64.sqrt() / 2.0, x / 2.0 + y)
            }
        }
    }

    /// Euclidean distance between two vertices at unit mesh (no wrapping).
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (xa, ya) = self.physical(a);
        let (xb, yb) = self.physical(b);
        ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt()
    }

    fn canonical(&self, p: (i64, i64)) -> Option<(i64, i64)> {
        match (self.family, self.size) {
            (Family::SquareTorus, Size::Torus { m }) => {
                let m = m as i64;
                let (x, y) = (p.0 - self.parity, p.1);
                if (x + y).rem_euclid(2) != 0 {
                    return None;
                }
                let i = ((x + y) / 2).rem_euclid(m);
                let j = ((y - x) / 2).rem_euclid(m);
                Some((i - j + self.parity, i + j))
            }
            (Family::TriangularTorus, Size::Torus { m }) => {
                let m = m as i64;
                Some((p.0.rem_euclid(m), p.1.rem_euclid(m)))
            }
            (Family::Hexagonal, Size::Torus { m }) => {
                let m = 3 * m as i64;
                Some((p.0.rem_euclid(m), p.1.rem_euclid(m)))
            }
            _ => Some(p),
        }
    }

    /// Vertex at plane coordinates `p` (wrapped on a torus).
    pub fn vertex_at(&self, p: (i64, i64)) -> Option<usize> {
        let c = self.canonical(p)?;
        self.lookup.get(&c).map(|&v| v as usize)
    }

    /// Edge joining `p` to `p + step`, if present.
    pub fn edge_between(&self, p: (i64, i64), step: (i64, i64)) -> Option<usize> {
        let a = self.vertex_at(p)?;
        self.neighbors(a).find_map(|(_, e)| {
            let (first, second) = self.edge(e);
            let d = self.edge_delta[e];
            let forward = first == a && d == step;
            let backward = second == a && d == (-step.0, -step.1);
            (forward || backward).then_some(e)
        })
    }

    /// Vertex closest to the centre of the bounding box of the embedding.
    pub fn center_vertex(&self) -> usize {
        let (mut x0, mut x1, mut y0, mut y1) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
        for &(x, y) in &self.pos {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let (cx, cy) = ((x0 + x1) as f64 / 2.0, (y0 + y1) as f64 / 2.0);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (v, &(x, y)) in self.pos.iter().enumerate() {
            let d = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if d < best_d {
                best_d = d;
                best = v;
            }
        }
        best
    }

    /// All vertices whose plane coordinates lie in `rect`.
    pub fn rectangle_vertices(&self, rect: RectSpec) -> Vec<usize> {
        let mut out = Vec::new();
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                if let Some(v) = self.vertex_at((x, y)) {
                    out.push(v);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Subgraph inside `rect` in local coordinates. Fails if the rectangle is
    /// empty of sites or wraps onto itself around a torus.
    pub fn rect_view(&self, rect: RectSpec) -> Result<RectView> {
        if rect.is_empty() {
            return invalid(format!("empty rectangle {rect:?}"));
        }
        let w = rect.width();
        let h = rect.height();
        let mut grid = vec![u32::MAX; (w * h) as usize];
        let mut vertices = Vec::new();
        let mut coords = Vec::new();
        let mut seen: HashMap<usize, (i64, i64)> = HashMap::new();
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                if let Some(v) = self.vertex_at((x, y)) {
                    if let Some(prev) = seen.insert(v, (x, y)) {
                        return invalid(format!(
                            "rectangle {rect:?} wraps around the torus (vertex {v} at {prev:?} and {:?})",
                            (x, y)
                        ));
                    }
                    grid[((y - rect.y0) * w + (x - rect.x0)) as usize] = vertices.len() as u32;
                    vertices.push(v);
                    coords.push((x, y));
                }
            }
        }
        if vertices.is_empty() {
            return invalid(format!("rectangle {rect:?} contains no vertex"));
        }
        let mut view = RectView {
            rect,
            adj: vec![Vec::new(); vertices.len()],
            vertices,
            coords,
            edges: Vec::new(),
            grid,
        };
        for la in 0..view.vertices.len() {
            let a = view.vertices[la];
            let (x, y) = view.coords[la];
            for (b, e) in self.neighbors(a) {
                if self.edges[e].0 as usize != a {
                    continue;
                }
                let d = self.edge_delta[e];
                if let Some(lb) = view.local_at((x + d.0, y + d.1)) {
                    if view.vertices[lb] == b {
                        view.edges.push((e, la, lb));
                        view.adj[la].push((lb, e));
                        view.adj[lb].push((la, e));
                    }
                }
            }
        }
        Ok(view)
    }

    /// Dual lattice and edge bijection.
    pub fn dual_map(&self) -> Result<DualMap> {
        match self.family {
            Family::SquareTorus => {
                let Size::Torus { m } = self.size else { unreachable!() };
                let dual = Self::square_torus_with_parity(m, 1 - self.parity)?;
                // Keyed by (first endpoint, step).
                let mut keyed: HashMap<_, usize> = HashMap::new();
                for f in 0..dual.n_edges() {
                    let first = dual.pos[dual.edges[f].0 as usize];
                    keyed.insert((first, dual.edge_delta[f]), f);
                }
                let mut edge_to_dual = Vec::with_capacity(self.n_edges());
                for e in 0..self.n_edges() {
                    let p = self.pos[self.edges[e].0 as usize];
                    let d = self.edge_delta[e];
                    let rot = (-d.1, d.0);
                    // The crossing dual edge shares the midpoint p + d/2.
                    let a = ((2 * p.0 + d.0 - rot.0) / 2, (2 * p.1 + d.1 - rot.1) / 2);
                    let b = (a.0 + rot.0, a.1 + rot.1);
                    let lookup = |start: (i64, i64), step: (i64, i64)| {
                        dual.canonical(start).and_then(|c| keyed.get(&(c, step)).copied())
                    };
                    let f = lookup(a, rot)
                        .or_else(|| lookup(b, (-rot.0, -rot.1)))
                        .ok_or_else(|| Error::InvalidArgument(format!("no dual edge for {e}")))?;
                    edge_to_dual.push(f);
                }
                Ok(DualMap::from_forward(dual, edge_to_dual))
            }
            Family::Triangular | Family::TriangularTorus => {
                let dual = Self::hexagonal_from(self);
                let ident = (0..self.n_edges()).collect();
                Ok(DualMap::from_forward(dual, ident))
            }
            Family::Hexagonal => {
                let dual = match self.size {
                    Size::Box { n } => Self::triangular(n)?,
                    Size::Torus { m } => Self::triangular_torus(m)?,
                    Size::Region { .. } => unreachable!(),
                };
                let ident = (0..self.n_edges()).collect();
                Ok(DualMap::from_forward(dual, ident))
            }
            Family::SquareBox => Err(Error::UnsupportedOperation(
                "the dual of a planar square box is not a square box; use a torus".into(),
            )),
        }
    }

    pub fn descriptor(&self) -> LatticeDescriptor {
        LatticeDescriptor {
            family: self.family,
            size: self.size,
            vertex_count: self.n_vertices(),
            edge_count: self.n_edges(),
        }
    }

    /// Edge list as CSV with header `edge_index,v1,v2`.
    pub fn edge_list_csv(&self) -> String {
        let mut out = String::from("edge_index,v1,v2\n");
        for (e, (a, b)) in self.edges().enumerate() {
            let _ = writeln!(out, "{e},{a},{b}");
        }
        out
    }

    pub(crate) fn parity(&self) -> i64 {
        self.parity
    }

}

impl DualMap {
    fn from_forward(dual: Lattice, edge_to_dual: Vec<usize>) -> Self {
        let mut dual_to_edge = vec![usize::MAX; edge_to_dual.len()];
        for (e, &f) in edge_to_dual.iter().enumerate() {
            dual_to_edge[f] = e;
        }
        Self {
            dual,
            edge_to_dual,
            dual_to_edge,
        }
    }
}

impl Builder {
    fn new() -> Self {
        Self {
            pos: Vec::new(),
            edges: Vec::new(),
            edge_delta: Vec::new(),
        }
    }

    fn push_edge(&mut self, a: u32, b: u32, delta: (i64, i64)) {
        self.edges.push((a, b));
        self.edge_delta.push(delta);
    }

    fn finish(
        self,
        family: Family,
        size: Size,
        parity: i64,
        full_degree: usize,
    ) -> Result<Lattice> {
        let n = self.pos.len();
        let mut degree = vec![0usize; n];
        for &(a, b) in &self.edges {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut adj_start = vec![0usize; n + 1];
        for v in 0..n {
            adj_start[v + 1] = adj_start[v] + degree[v];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![(0u32, 0u32); adj_start[n]];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            adj[fill[a as usize]] = (b, e as u32);
            fill[a as usize] += 1;
            adj[fill[b as usize]] = (a, e as u32);
            fill[b as usize] += 1;
        }
        let periodic = matches!(size, Size::Torus { .. });
        let is_boundary: Vec<bool> = (0..n)
            .map(|v| !periodic && degree[v] < full_degree)
            .collect();
        let boundary = (0..n).filter(|&v| is_boundary[v]).collect();
        let lookup = self
            .pos
            .iter()
            .enumerate()
            .map(|(v, &p)| (p, v as u32))
            .collect();

        let mut uf = UnionFind::new(n);
        for &(a, b) in &self.edges {
            uf.union(a as usize, b as usize);
        }
        if uf.set_count() != 1 {
            return invalid(format!("{} lattice of size {size:?} is not connected", family.name()));
        }

        let id = {
            let text = format!("{}|{:?}|{}", family.name(), size, parity);
            // FNV-1a
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for byte in text.bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
            LatticeId(h)
        };

        Ok(Lattice {
            family,
            size,
            parity,
            pos: self.pos,
            edges: self.edges,
            edge_delta: self.edge_delta,
            adj_start,
            adj,
            boundary,
            is_boundary,
            lookup,
            id,
        })
    }
}
