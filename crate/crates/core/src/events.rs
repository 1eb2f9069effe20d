//! Crossing, circuit and connection events evaluated on configurations.
//!
//! Rectangles are half-open in plane coordinates. The *sides* of a
//! rectangle are its extreme occupied columns (left/right) and rows
//! (bottom/top); a crossing must use only edges with both ends inside.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::configuration::{dual_configuration, BoundaryCondition, Configuration};
use crate::error::{invalid, Error, Result};
use crate::lattice::{DualMap, Lattice, RectSpec, RectView};
use crate::union_find::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Left side to right side.
    Horizontal,
    /// Bottom side to top side.
    Vertical,
}

impl Direction {
    pub fn letter(self) -> char {
        match self {
            Direction::Horizontal => 'h',
            Direction::Vertical => 'v',
        }
    }

    pub fn other(self) -> Self {
        match self {
            Direction::Horizontal => Direction::Vertical,
            Direction::Vertical => Direction::Horizontal,
        }
    }
}

/// A crossing event compiled against one lattice.
#[derive(Clone, Debug)]
pub struct Crossing {
    view: RectView,
    direction: Direction,
    source: Vec<bool>,
    target: Vec<bool>,
}

impl Crossing {
    pub fn new(lattice: &Lattice, rect: RectSpec, direction: Direction) -> Result<Self> {
        let view = lattice.rect_view(rect)?;
        let (lo, hi) = match direction {
            Direction::Horizontal => (view.min_x(), view.max_x()),
            Direction::Vertical => (view.min_y(), view.max_y()),
        };
        let coord = |c: &(i64, i64)| match direction {
            Direction::Horizontal => c.0,
            Direction::Vertical => c.1,
        };
        let source = view.coords.iter().map(|c| coord(c) == lo).collect();
        let target = view.coords.iter().map(|c| coord(c) == hi).collect();
        Ok(Self {
            view,
            direction,
            source,
            target,
        })
    }

    pub fn rect(&self) -> RectSpec {
        self.view.rect
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn view(&self) -> &RectView {
        &self.view
    }

    /// Lattice vertices on the source side.
    pub fn source_vertices(&self) -> Vec<usize> {
        self.side(&self.source)
    }

    pub fn target_vertices(&self) -> Vec<usize> {
        self.side(&self.target)
    }

    fn side(&self, mask: &[bool]) -> Vec<usize> {
        (0..self.view.len())
            .filter(|&l| mask[l])
            .map(|l| self.view.vertices[l])
            .collect()
    }

    pub fn holds(&self, config: &Configuration) -> bool {
        let n = self.view.len();
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&l| self.source[l]).collect();
        for &l in &stack {
            seen[l] = true;
        }
        while let Some(l) = stack.pop() {
            if self.target[l] {
                return true;
            }
            for &(m, e) in &self.view.adj[l] {
                if !seen[m] && config.is_open(e) {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        false
    }

    /// Local components of the open subgraph inside the rectangle.
    fn components(&self, config: &Configuration) -> UnionFind {
        let mut uf = UnionFind::new(self.view.len());
        for &(e, a, b) in &self.view.edges {
            if config.is_open(e) {
                uf.union(a, b);
            }
        }
        uf
    }

    /// The top-most horizontal crossing as a simple path of lattice
    /// vertices from the left side to the right side.
    ///
    /// The walk starts at the highest left-side vertex whose cluster crosses,
    /// follows the upper boundary of that cluster by always taking the
    /// left-most open edge until it reaches the highest right-side vertex of
    /// the same cluster, and is then loop-erased.
    pub fn topmost(&self, lattice: &Lattice, config: &Configuration) -> Result<Option<Vec<usize>>> {
        if self.direction != Direction::Horizontal {
            return invalid("the top-most crossing is defined for horizontal crossings");
        }
        let n = self.view.len();
        let mut uf = self.components(config);
        let mut crosses = vec![false; n];
        let mut reaches_right = vec![false; n];
        for l in 0..n {
            if self.target[l] {
                let r = uf.find(l);
                reaches_right[r] = true;
            }
        }
        for l in 0..n {
            if self.source[l] && reaches_right[uf.find(l)] {
                crosses[l] = true;
            }
        }
        let start = (0..n)
            .filter(|&l| crosses[l])
            .max_by_key(|&l| self.view.coords[l].1);
        let Some(start) = start else {
            return Ok(None);
        };
        let root = uf.find(start);
        let end = (0..n)
            .filter(|&l| self.target[l] && uf.find(l) == root)
            .max_by_key(|&l| self.view.coords[l].1)
            .expect("the start cluster crosses");
        let angle = |a: usize, b: usize| {
            let (xa, ya) = lattice.physical_of(self.view.coords[a]);
            let (xb, yb) = lattice.physical_of(self.view.coords[b]);
            (yb - ya).atan2(xb - xa)
        };
        let mut walk = vec![start];
        let mut cur = start;
        let mut back = PI;
        let limit = 4 * self.view.edges.len() + 4;
        while cur != end {
            let mut best: Option<(f64, usize, f64)> = None;
            for &(m, e) in &self.view.adj[cur] {
                if !config.is_open(e) {
                    continue;
                }
                let a = angle(cur, m);
                let mut cw = (back - a).rem_euclid(TAU);
                if cw < 1e-9 {
                    cw = TAU;
                }
                if best.is_none_or(|(b, _, _)| cw < b) {
                    best = Some((cw, m, a));
                }
            }
            let (_, next, a) = best.expect("a vertex of a crossing cluster other than its end has an open edge");
            back = a + PI;
            cur = next;
            walk.push(cur);
            if walk.len() > limit {
                return Err(Error::InvalidArgument("boundary walk did not terminate".into()));
            }
        }
        // Chronological loop erasure.
        let mut pos = vec![usize::MAX; n];
        let mut path: Vec<usize> = Vec::new();
        for l in walk {
            if pos[l] != usize::MAX {
                for &m in &path[pos[l] + 1..] {
                    pos[m] = usize::MAX;
                }
                path.truncate(pos[l] + 1);
            } else {
                pos[l] = path.len();
                path.push(l);
            }
        }
        Ok(Some(path.into_iter().map(|l| self.view.vertices[l]).collect()))
    }
}

/// `C_h(rect)` or `C_v(rect)`.
pub fn has_crossing(lattice: &Lattice, config: &Configuration, rect: RectSpec, direction: Direction) -> Result<bool> {
    config_matches(lattice, config)?;
    Ok(Crossing::new(lattice, rect, direction)?.holds(config))
}

/// Crossing of `rect` by the dual configuration on the dual lattice.
pub fn has_dual_crossing(
    config: &Configuration,
    dual: &DualMap,
    rect: RectSpec,
    direction: Direction,
) -> Result<bool> {
    let dc = dual_configuration(config, dual)?;
    Ok(Crossing::new(&dual.dual, rect, direction)?.holds(&dc))
}

/// Dual crossing compiled once for repeated evaluation.
#[derive(Clone, Debug)]
pub struct DualCrossing {
    map: DualMap,
    crossing: Crossing,
}

impl DualCrossing {
    pub fn new(lattice: &Lattice, rect: RectSpec, direction: Direction) -> Result<Self> {
        let map = lattice.dual_map()?;
        let crossing = Crossing::new(&map.dual, rect, direction)?;
        Ok(Self { map, crossing })
    }

    pub fn holds(&self, config: &Configuration) -> bool {
        let dc = dual_configuration(config, &self.map).expect("configuration matches the primal lattice");
        self.crossing.holds(&dc)
    }
}

pub fn topmost_crossing(lattice: &Lattice, config: &Configuration, rect: RectSpec) -> Result<Option<Vec<usize>>> {
    config_matches(lattice, config)?;
    Crossing::new(lattice, rect, Direction::Horizontal)?.topmost(lattice, config)
}

/// `x ↔ y`.
pub fn two_point(lattice: &Lattice, config: &Configuration, bc: &BoundaryCondition, x: usize, y: usize) -> Result<bool> {
    crate::configuration::connected(lattice, config, bc, x, y)
}

fn config_matches(lattice: &Lattice, config: &Configuration) -> Result<()> {
    if config.len() != lattice.n_edges() || config.lattice_id() != lattice.id() {
        return Err(Error::LatticeMismatch {
            expected: lattice.n_edges(),
            got: config.len(),
        });
    }
    Ok(())
}

/// Annulus `B(r_out) ∖ B(r_in)` around `center` with the enclosing box
/// `B(r_box)`, where `B(r)` is the closed box of radius `r` and the radii are
/// `⌊α^n⌋`, `⌊α^(n+1)⌋`, `⌊α^(n+2)⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub alpha: f64,
    pub n: u32,
    pub center: (i64, i64),
}

impl AnnulusSpec {
    pub fn new(alpha: f64, n: u32) -> Result<Self> {
        Self::centered(alpha, n, (0, 0))
    }

    pub fn centered(alpha: f64, n: u32, center: (i64, i64)) -> Result<Self> {
        if alpha.is_nan() || alpha <= 1.0 {
            return invalid(format!("alpha = {alpha} must exceed 1"));
        }
        let s = Self { alpha, n, center };
        if s.r_out() <= s.r_in() || s.r_in() < 1 {
            return invalid(format!("annulus alpha={alpha}, n={n} is degenerate"));
        }
        Ok(s)
    }

    fn radius(&self, k: u32) -> i64 {
        self.alpha.powi(k as i32).floor() as i64
    }

    pub fn r_in(&self) -> i64 {
        self.radius(self.n)
    }

    pub fn r_out(&self) -> i64 {
        self.radius(self.n + 1)
    }

    pub fn r_box(&self) -> i64 {
        self.radius(self.n + 2)
    }

    fn norm(&self, p: (i64, i64)) -> i64 {
        (p.0 - self.center.0).abs().max((p.1 - self.center.1).abs())
    }

    pub fn in_annulus(&self, p: (i64, i64)) -> bool {
        let r = self.norm(p);
        r > self.r_in() && r <= self.r_out()
    }

    /// The five rectangles whose crossings force the event: vertical
    /// crossings of the right and left strips, horizontal crossings of the
    /// top and bottom strips, and a horizontal crossing of the wide middle
    /// band reaching the box boundary. Strips start one unit outside the
    /// inner box so the circuit they build lies in the annulus.
    pub fn forcing_rectangles(&self) -> [(RectSpec, Direction); 5] {
        let (a, b, c) = (self.r_in() + 1, self.r_out(), self.r_box());
        let (cx, cy) = self.center;
        let r = |x0: i64, x1: i64, y0: i64, y1: i64| RectSpec::closed(x0, x1, y0, y1).translate(cx, cy);
        [
            (r(a, b, -b, b), Direction::Vertical),
            (r(-b, -a, -b, b), Direction::Vertical),
            (r(-b, b, a, b), Direction::Horizontal),
            (r(-b, b, -b, -a), Direction::Horizontal),
            (r(-c, c, -b, b), Direction::Horizontal),
        ]
    }
}

impl fmt::Display for AnnulusSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "annulus:alpha={},n={}", self.alpha, self.n)
    }
}

/// The event "an open circuit in the annulus surrounds the centre and is
/// joined by an open path inside the box to the boundary of the box".
///
/// A circuit is understood as an open cluster of the annulus that separates
/// the inner box from the outside. It is detected on the dual: dual sites
/// are flooded from outside the annulus, never crossing an open annulus
/// edge, and the circuit exists exactly when the centre stays dry.
#[derive(Clone, Debug)]
pub struct AnnulusEvent {
    spec: AnnulusSpec,
    /// Dual sites of the flood domain and their blocking edges.
    sites: Vec<(i64, i64)>,
    /// `(neighbour site, primal edge, primal edge lies in the annulus)`.
    site_adj: Vec<Vec<(usize, usize, bool)>>,
    outside: Vec<usize>,
    centre_site: usize,
    /// Annulus-edge endpoints (lattice vertices).
    edge_ends: Vec<(usize, usize)>,
    box_edges: Vec<usize>,
    box_boundary: Vec<usize>,
}

impl AnnulusEvent {
    pub fn new(lattice: &Lattice, spec: AnnulusSpec) -> Result<Self> {
        if !matches!(lattice.family(), crate::lattice::Family::SquareBox | crate::lattice::Family::SquareTorus) {
            return Err(Error::UnsupportedOperation("annulus events are implemented on square lattices".into()));
        }
        let rb = spec.r_box();
        let (cx, cy) = spec.center;
        let box_rect = RectSpec::closed(cx - rb, cx + rb, cy - rb, cy + rb);
        let view = lattice
            .rect_view(box_rect)
            .map_err(|_| Error::InvalidArgument(format!("{spec} does not fit in the lattice")))?;
        if view.len() != box_sites(box_rect, lattice.parity()) {
            return invalid(format!("{spec}: the box [-{rb},{rb}]² is not contained in the lattice"));
        }
        let box_edges: Vec<usize> = view.edges.iter().map(|&(e, _, _)| e).collect();
        let box_boundary = (0..view.len())
            .filter(|&l| spec.norm(view.coords[l]) == rb)
            .map(|l| view.vertices[l])
            .collect();

        // Dual sites of opposite parity in B(r_out + 1).
        let ro = spec.r_out() + 1;
        let parity = lattice.parity();
        let mut sites = Vec::new();
        let mut index = std::collections::HashMap::new();
        for y in cy - ro..=cy + ro {
            for x in cx - ro..=cx + ro {
                if (x + y - parity).rem_euclid(2) == 1 {
                    index.insert((x, y), sites.len());
                    sites.push((x, y));
                }
            }
        }
        let mut site_adj = vec![Vec::new(); sites.len()];
        let mut edge_ends = Vec::new();
        for (s, &(x, y)) in sites.iter().enumerate() {
            for (dx, dy) in [(1, 1), (-1, 1)] {
                let Some(&t) = index.get(&(x + dx, y + dy)) else {
                    continue;
                };
                // The primal edge crossed by this dual step.
                let (p, step) = if (dx, dy) == (1, 1) {
                    ((x + 1, y), (-1, 1))
                } else {
                    ((x, y + 1), (-1, -1))
                };
                let q = (p.0 + step.0, p.1 + step.1);
                let e = lattice
                    .edge_between(p, step)
                    .ok_or_else(|| Error::InvalidArgument(format!("{spec}: missing edge at {p:?}")))?;
                let inside = spec.in_annulus(p) && spec.in_annulus(q);
                if inside {
                    edge_ends.push(lattice.edge(e));
                }
                site_adj[s].push((t, e, inside));
                site_adj[t].push((s, e, inside));
            }
        }
        let outside = (0..sites.len()).filter(|&s| spec.norm(sites[s]) > spec.r_out()).collect();
        let centre_site = index
            .get(&(cx + 1, cy))
            .or_else(|| index.get(&(cx, cy)))
            .copied()
            .expect("a dual site next to the centre");
        Ok(Self {
            spec,
            sites,
            site_adj,
            outside,
            centre_site,
            edge_ends,
            box_edges,
            box_boundary,
        })
    }

    pub fn spec(&self) -> AnnulusSpec {
        self.spec
    }

    /// Dual flood from outside; `blocked(e)` says whether an annulus edge
    /// stops the flow.
    fn flood(&self, blocked: impl Fn(usize) -> bool) -> Vec<bool> {
        let mut wet = vec![false; self.sites.len()];
        let mut stack = self.outside.clone();
        for &s in &stack {
            wet[s] = true;
        }
        while let Some(s) = stack.pop() {
            for &(t, e, inside) in &self.site_adj[s] {
                if !wet[t] && !(inside && blocked(e)) {
                    wet[t] = true;
                    stack.push(t);
                }
            }
        }
        wet
    }

    /// Whether some open circuit of the annulus surrounds the centre.
    pub fn has_circuit(&self, config: &Configuration) -> bool {
        !self.flood(|e| config.is_open(e))[self.centre_site]
    }

    pub fn holds(&self, lattice: &Lattice, config: &Configuration) -> bool {
        let wet = self.flood(|e| config.is_open(e));
        if wet[self.centre_site] {
            return false;
        }
        // Annulus clusters.
        let n = lattice.n_vertices();
        let mut annulus = UnionFind::new(n);
        for adj in &self.site_adj {
            for &(_, e, inside) in adj {
                if inside && config.is_open(e) {
                    let (a, b) = lattice.edge(e);
                    annulus.union(a, b);
                }
            }
        }
        // Clusters carrying the frontier between the wet region and the rest.
        let mut candidates: Vec<usize> = Vec::new();
        for (s, adj) in self.site_adj.iter().enumerate() {
            if !wet[s] {
                continue;
            }
            for &(t, e, inside) in adj {
                if !wet[t] && inside && config.is_open(e) {
                    let r = annulus.find(lattice.edge(e).0);
                    if !candidates.contains(&r) {
                        candidates.push(r);
                    }
                }
            }
        }
        let mut in_box = UnionFind::new(n + 1);
        for &e in &self.box_edges {
            if config.is_open(e) {
                let (a, b) = lattice.edge(e);
                in_box.union(a, b);
            }
        }
        for &v in &self.box_boundary {
            in_box.union(v, n);
        }
        candidates.into_iter().any(|root| {
            let surrounds = !self.flood(|e| {
                config.is_open(e) && annulus.find_const(lattice.edge(e).0) == root
            })[self.centre_site];
            surrounds && in_box.same(root, n)
        })
    }

    /// Number of edges with both ends in the annulus.
    pub fn annulus_edge_count(&self) -> usize {
        self.edge_ends.len()
    }
}

fn box_sites(rect: RectSpec, parity: i64) -> usize {
    let mut count = 0;
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            if (x + y - parity).rem_euclid(2) == 0 {
                count += 1;
            }
        }
    }
    count
}

pub fn annulus_circuit_event(lattice: &Lattice, config: &Configuration, spec: AnnulusSpec) -> Result<bool> {
    config_matches(lattice, config)?;
    Ok(AnnulusEvent::new(lattice, spec)?.holds(lattice, config))
}

/// Textual event specification used by the command line.
///
/// * `crossing:h:x0,y0,x1,y1` and `crossing:v:…` for `[x0,x1) × [y0,y1)`
/// * `dual-crossing:h:…`
/// * `annulus:alpha=2,n=3` (centred at the origin)
/// * `two-point:x0,y0,x1,y1` for the points `(x0,y0)` and `(x1,y1)`
/// * `edge:k` for the state of edge `k`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventSpec {
    Crossing { direction: Direction, rect: RectSpec },
    DualCrossing { direction: Direction, rect: RectSpec },
    Annulus { alpha: f64, n: u32 },
    TwoPoint { a: (i64, i64), b: (i64, i64) },
    Edge { index: usize },
}

fn parse_ints(s: &str, n: usize) -> Result<Vec<i64>> {
    let v: std::result::Result<Vec<i64>, _> = s.split(',').map(|t| t.trim().parse::<i64>()).collect();
    match v {
        Ok(v) if v.len() == n => Ok(v),
        _ => invalid(format!("expected {n} comma-separated integers, got '{s}'")),
    }
}

fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "h" => Ok(Direction::Horizontal),
        "v" => Ok(Direction::Vertical),
        _ => invalid(format!("crossing direction must be 'h' or 'v', got '{s}'")),
    }
}

impl FromStr for EventSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(2, ':');
        let kind = parts.next().unwrap_or_default();
        let rest = parts.next().unwrap_or_default();
        match kind {
            "crossing" | "dual-crossing" => {
                let (d, coords) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidArgument(format!("malformed crossing '{s}'")))?;
                let direction = parse_direction(d)?;
                let c = parse_ints(coords, 4)?;
                let rect = RectSpec::new(c[0], c[2], c[1], c[3]);
                if rect.is_empty() {
                    return invalid(format!("empty rectangle in '{s}'"));
                }
                Ok(if kind == "crossing" {
                    EventSpec::Crossing { direction, rect }
                } else {
                    EventSpec::DualCrossing { direction, rect }
                })
            }
            "annulus" => {
                let (mut alpha, mut n) = (None, None);
                for kv in rest.split(',') {
                    match kv.split_once('=') {
                        Some(("alpha", v)) => alpha = v.parse::<f64>().ok(),
                        Some(("n", v)) => n = v.parse::<u32>().ok(),
                        _ => return invalid(format!("malformed annulus '{s}'")),
                    }
                }
                match (alpha, n) {
                    (Some(alpha), Some(n)) => {
                        AnnulusSpec::new(alpha, n)?;
                        Ok(EventSpec::Annulus { alpha, n })
                    }
                    _ => invalid(format!("annulus needs alpha and n: '{s}'")),
                }
            }
            "two-point" => {
                let c = parse_ints(rest, 4)?;
                Ok(EventSpec::TwoPoint {
                    a: (c[0], c[1]),
                    b: (c[2], c[3]),
                })
            }
            "edge" => rest
                .parse()
                .map(|index| EventSpec::Edge { index })
                .map_err(|_| Error::InvalidArgument(format!("malformed edge event '{s}'"))),
            _ => invalid(format!("unknown event '{s}'")),
        }
    }
}

impl fmt::Display for EventSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventSpec::Crossing { direction, rect } | EventSpec::DualCrossing { direction, rect } => {
                let name = if matches!(self, EventSpec::Crossing { .. }) { "crossing" } else { "dual-crossing" };
                write!(f, "{name}:{}:{},{},{},{}", direction.letter(), rect.x0, rect.y0, rect.x1, rect.y1)
            }
            EventSpec::Annulus { alpha, n } => write!(f, "annulus:alpha={alpha},n={n}"),
            EventSpec::TwoPoint { a, b } => write!(f, "two-point:{},{},{},{}", a.0, a.1, b.0, b.1),
            EventSpec::Edge { index } => write!(f, "edge:{index}"),
        }
    }
}

/// An [`EventSpec`] bound to a lattice and boundary condition.
#[derive(Clone, Debug)]
pub enum CompiledEvent {
    Crossing(Crossing),
    DualCrossing(Box<DualCrossing>),
    Annulus(Box<AnnulusEvent>, Lattice),
    TwoPoint(usize, usize, Lattice, BoundaryCondition),
    Edge(usize),
}

impl EventSpec {
    pub fn compile(&self, lattice: &Lattice, bc: &BoundaryCondition) -> Result<CompiledEvent> {
        Ok(match *self {
            EventSpec::Crossing { direction, rect } => CompiledEvent::Crossing(Crossing::new(lattice, rect, direction)?),
            EventSpec::DualCrossing { direction, rect } => {
                CompiledEvent::DualCrossing(Box::new(DualCrossing::new(lattice, rect, direction)?))
            }
            EventSpec::Annulus { alpha, n } => {
                let centre = lattice.position(lattice.center_vertex());
                let spec = AnnulusSpec::centered(alpha, n, centre)?;
                CompiledEvent::Annulus(Box::new(AnnulusEvent::new(lattice, spec)?), lattice.clone())
            }
            EventSpec::TwoPoint { a, b } => {
                let va = lattice
                    .vertex_at(a)
                    .ok_or_else(|| Error::InvalidArgument(format!("no vertex at {a:?}")))?;
                let vb = lattice
                    .vertex_at(b)
                    .ok_or_else(|| Error::InvalidArgument(format!("no vertex at {b:?}")))?;
                bc.validate(lattice)?;
                CompiledEvent::TwoPoint(va, vb, lattice.clone(), bc.clone())
            }
            EventSpec::Edge { index } => {
                if index >= lattice.n_edges() {
                    return invalid(format!("edge {index} out of range"));
                }
                CompiledEvent::Edge(index)
            }
        })
    }
}

impl CompiledEvent {
    pub fn holds(&self, config: &Configuration) -> bool {
        match self {
            CompiledEvent::Crossing(c) => c.holds(config),
            CompiledEvent::DualCrossing(c) => c.holds(config),
            CompiledEvent::Annulus(a, l) => a.holds(l, config),
            CompiledEvent::TwoPoint(x, y, l, bc) => {
                crate::configuration::connected(l, config, bc, *x, *y).unwrap_or(false)
            }
            CompiledEvent::Edge(e) => config.is_open(*e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_config(l: &Lattice, p: f64, rng: &mut ChaCha8Rng) -> Configuration {
        let bits: Vec<bool> = (0..l.n_edges()).map(|_| rng.random::<f64>() < p).collect();
        Configuration::from_bits(l, &bits).unwrap()
    }

    #[test]
    fn trivial_crossings() {
        let l = Lattice::square_torus(6).unwrap();
        let rect = RectSpec::new(0, 4, 0, 4);
        for d in [Direction::Horizontal, Direction::Vertical] {
            assert!(has_crossing(&l, &Configuration::open(&l), rect, d).unwrap());
            assert!(!has_crossing(&l, &Configuration::closed(&l), rect, d).unwrap());
        }
        let dm = l.dual_map().unwrap();
        assert!(!has_dual_crossing(&Configuration::open(&l), &dm, rect, Direction::Vertical).unwrap());
    }

    #[test]
    fn crossing_matches_union_find_reachability() {
        let l = Lattice::square_region(RectSpec::new(0, 8, 0, 8)).unwrap();
        let rect = RectSpec::new(0, 8, 0, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let c = random_config(&l, 0.5, &mut rng);
            for d in [Direction::Horizontal, Direction::Vertical] {
                let cr = Crossing::new(&l, rect, d).unwrap();
                let mut uf = UnionFind::new(l.n_vertices());
                for e in c.open_edges() {
                    let (a, b) = l.edge(e);
                    uf.union(a, b);
                }
                let oracle = cr
                    .source_vertices()
                    .iter()
                    .any(|&s| cr.target_vertices().iter().any(|&t| uf.same(s, t)));
                assert_eq!(cr.holds(&c), oracle);
            }
        }
    }

    #[test]
    fn wrapping_rectangle_is_rejected() {
        let l = Lattice::square_torus(4).unwrap();
        assert!(has_crossing(&l, &Configuration::open(&l), RectSpec::new(0, 12, 0, 2), Direction::Horizontal).is_err());
    }

    #[test]
    fn square_complementarity_exhaustive() {
        let l = Lattice::square_torus(3).unwrap();
        let rect = RectSpec::new(0, 2, 0, 2);
        let primal = Crossing::new(&l, rect, Direction::Horizontal).unwrap();
        let dual = DualCrossing::new(&l, rect, Direction::Vertical).unwrap();
        for index in 0..1u64 << l.n_edges() {
            let c = Configuration::from_index(&l, index);
            assert_ne!(primal.holds(&c), dual.holds(&c), "config {index}");
        }
    }

    #[test]
    fn square_complementarity_larger_squares() {
        let l = Lattice::square_torus(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [2, 4, 6, 8] {
            let rect = RectSpec::new(1, 1 + n, 3, 3 + n);
            let primal = Crossing::new(&l, rect, Direction::Horizontal).unwrap();
            let dual = DualCrossing::new(&l, rect, Direction::Vertical).unwrap();
            for _ in 0..300 {
                let c = random_config(&l, 0.5, &mut rng);
                assert_ne!(primal.holds(&c), dual.holds(&c));
            }
        }
    }

    #[test]
    fn crossings_are_increasing() {
        let l = Lattice::square_torus(3).unwrap();
        let cr = Crossing::new(&l, RectSpec::new(0, 3, 0, 4), Direction::Vertical).unwrap();
        crate::exact::verify_increasing(&l, &|c: &Configuration| cr.holds(c)).unwrap();
    }

    /// Every vertex lying on some open left-to-right crossing.
    fn vertices_on_crossings(cr: &Crossing, c: &Configuration) -> Vec<bool> {
        let v = cr.view();
        let n = v.len();
        let mut on = vec![false; n];
        let src: Vec<usize> = (0..n).filter(|&l| cr.source[l]).collect();
        fn dfs(cr: &Crossing, c: &Configuration, l: usize, path: &mut Vec<usize>, used: &mut [bool], on: &mut [bool]) {
            if cr.target[l] {
                for &m in path.iter() {
                    on[m] = true;
                }
            }
            for &(m, e) in &cr.view().adj[l] {
                if !used[m] && c.is_open(e) {
                    used[m] = true;
                    path.push(m);
                    dfs(cr, c, m, path, used, on);
                    path.pop();
                    used[m] = false;
                }
            }
        }
        for s in src {
            let mut used = vec![false; n];
            used[s] = true;
            dfs(cr, c, s, &mut vec![s], &mut used, &mut on);
        }
        on
    }

    /// Vertices separated from the top side only by `path`: reachable from
    /// top-row vertices through any lattice edges avoiding the path.
    fn above(cr: &Crossing, path_local: &[usize]) -> Vec<bool> {
        let v = cr.view();
        let n = v.len();
        let mut blocked = vec![false; n];
        for &l in path_local {
            blocked[l] = true;
        }
        let top = v.max_y();
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&l| v.coords[l].1 == top && !blocked[l]).collect();
        for &l in &stack {
            seen[l] = true;
        }
        while let Some(l) = stack.pop() {
            for &(m, _) in &v.adj[l] {
                if !seen[m] && !blocked[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen
    }

    #[test]
    fn topmost_crossing_against_all_paths() {
        let rect = RectSpec::new(0, 9, 0, 9);
        let l = Lattice::square_region(rect).unwrap();
        let cr = Crossing::new(&l, rect, Direction::Horizontal).unwrap();
        let local: std::collections::HashMap<usize, usize> =
            cr.view().vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        for k in 0..1500 {
            let c = random_config(&l, [0.5, 0.6, 0.7][k % 3], &mut rng);
            let top = cr.topmost(&l, &c).unwrap();
            assert_eq!(top.is_some(), cr.holds(&c));
            let Some(path) = top else { continue };
            checked += 1;
            // It is an open simple path from the left side to the right side.
            let pl: Vec<usize> = path.iter().map(|v| local[v]).collect();
            assert!(cr.source[pl[0]] && cr.target[*pl.last().unwrap()]);
            for w in pl.windows(2) {
                assert!(cr.view().adj[w[0]].iter().any(|&(m, e)| m == w[1] && c.is_open(e)));
            }
            let mut sorted = pl.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), pl.len());
            // No open crossing visits a vertex strictly above it.
            let up = above(&cr, &pl);
            let on = vertices_on_crossings(&cr, &c);
            assert!((0..cr.view().len()).all(|i| !(up[i] && on[i])), "open crossing above {path:?}");
            // Closing an open edge strictly below leaves it unchanged.
            let mut below_open: Vec<usize> = cr
                .view()
                .edges
                .iter()
                .filter(|&&(e, a, b)| c.is_open(e) && !up[a] && !up[b] && !(pl.contains(&a) && pl.contains(&b)))
                .map(|&(e, _, _)| e)
                .collect();
            below_open.truncate(3);
            for e in below_open {
                let mut d = c.clone();
                d.set(e, false);
                assert_eq!(cr.topmost(&l, &d).unwrap().as_deref(), Some(&path[..]));
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn topmost_of_straight_lines() {
        let rect = RectSpec::new(0, 9, 0, 9);
        let l = Lattice::square_region(rect).unwrap();
        // Zig-zag lines along rows y = 2 (lower) and y = 6 (upper).
        let line = |y: i64| -> Vec<usize> {
            (0..8)
                .map(|x| {
                    let p = if (x + y) % 2 == 0 { (x, y) } else { (x, y + 1) };
                    let step = if p.1 == y { (1, 1) } else { (1, -1) };
                    l.edge_between(p, step).unwrap()
                })
                .collect()
        };
        let lower = line(2);
        let c = Configuration::from_open_edges(&l, lower.iter().copied());
        let path = topmost_crossing(&l, &c, rect).unwrap().unwrap();
        assert_eq!(path.len(), 9);
        let both = Configuration::from_open_edges(&l, lower.iter().chain(&line(6)).copied());
        let path = topmost_crossing(&l, &both, rect).unwrap().unwrap();
        assert!(path.iter().all(|&v| l.position(v).1 >= 6));
        assert!(topmost_crossing(&l, &Configuration::closed(&l), rect).unwrap().is_none());
    }

    #[test]
    fn annulus_trivial_cases() {
        let spec = AnnulusSpec::new(2.0, 1).unwrap();
        let l = Lattice::square_region(RectSpec::closed(-8, 8, -8, 8)).unwrap();
        assert!(annulus_circuit_event(&l, &Configuration::open(&l), spec).unwrap());
        assert!(!annulus_circuit_event(&l, &Configuration::closed(&l), spec).unwrap());
        let small = Lattice::square_region(RectSpec::closed(-7, 7, -7, 7)).unwrap();
        assert!(annulus_circuit_event(&small, &Configuration::open(&small), spec).is_err());
        assert!(AnnulusSpec::new(1.0, 2).is_err());
        assert!(AnnulusSpec::new(1.2, 0).is_err());
    }

    #[test]
    fn annulus_on_a_torus() {
        // The box of radius 8 fits once the torus period exceeds its side.
        let spec = AnnulusSpec::centered(2.0, 1, (0, 16)).unwrap();
        let l = Lattice::square_torus(17).unwrap();
        assert!(annulus_circuit_event(&l, &Configuration::open(&l), spec).unwrap());
        let l = Lattice::square_torus(16).unwrap();
        assert!(annulus_circuit_event(&l, &Configuration::open(&l), spec).is_err());
    }

    /// Ring of open edges along the square of radius r (a circuit).
    fn ring(l: &Lattice, r: i64) -> Vec<usize> {
        let mut edges = Vec::new();
        for k in 0..r {
            // Diamond |x| + |y| = r through the four axis points.
            for (p, s) in [
                ((r - k, k), (-1, 1)),
                ((-k, r - k), (-1, -1)),
                ((-(r - k), -k), (1, -1)),
                ((k, -(r - k)), (1, 1)),
            ] {
                edges.push(l.edge_between(p, s).unwrap());
            }
        }
        edges
    }

    #[test]
    fn annulus_circuit_needs_outward_path() {
        let spec = AnnulusSpec::new(2.0, 1).unwrap(); // radii 2, 4, 8
        let l = Lattice::square_region(RectSpec::closed(-8, 8, -8, 8)).unwrap();
        // |x|+|y| = 4 fits in 2 < max(|x|,|y|) <= 4 only where max > 2.
        let r6 = ring(&l, 6);
        let c = Configuration::from_open_edges(&l, r6.iter().copied());
        let ev = AnnulusEvent::new(&l, spec).unwrap();
        // The diamond of radius 6 leaves the annulus (its corners reach 6 > 4).
        assert!(!ev.has_circuit(&c));
        // A square ring at max-norm 4 made of zig-zags.
        let mut sq = Vec::new();
        for t in -4..4 {
            let top = if (t + 4) % 2 == 0 { (t, 4) } else { (t, 3) };
            let bottom = if (t + 4) % 2 == 0 { (t, -4) } else { (t, -3) };
            sq.push(l.edge_between(top, (1, if top.1 == 4 { -1 } else { 1 })).unwrap());
            sq.push(l.edge_between(bottom, (1, if bottom.1 == -4 { 1 } else { -1 })).unwrap());
            let right = if (t + 4) % 2 == 0 { (4, t) } else { (3, t) };
            let left = if (t + 4) % 2 == 0 { (-4, t) } else { (-3, t) };
            sq.push(l.edge_between(right, (if right.0 == 4 { -1 } else { 1 }, 1)).unwrap());
            sq.push(l.edge_between(left, (if left.0 == -4 { 1 } else { -1 }, 1)).unwrap());
        }
        let c = Configuration::from_open_edges(&l, sq.iter().copied());
        assert!(ev.has_circuit(&c));
        assert!(!ev.holds(&l, &c), "no path to the box boundary yet");
        // Add a straight path from (4,0) to (8,0) along a zig-zag.
        let mut with_path = sq.clone();
        for x in 4..8 {
            let p = if x % 2 == 0 { (x, 0) } else { (x, 1) };
            with_path.push(l.edge_between(p, (1, if p.1 == 0 { 1 } else { -1 })).unwrap());
        }
        let c = Configuration::from_open_edges(&l, with_path);
        assert!(ev.holds(&l, &c));
    }

    #[test]
    fn forcing_rectangles_imply_the_event() {
        // Radii 3, 9, 27 leave strips wide enough to be crossed often.
        let spec = AnnulusSpec::new(3.0, 1).unwrap();
        let l = Lattice::square_region(RectSpec::closed(-27, 27, -27, 27)).unwrap();
        let ev = AnnulusEvent::new(&l, spec).unwrap();
        let rects: Vec<Crossing> = spec
            .forcing_rectangles()
            .iter()
            .map(|&(r, d)| Crossing::new(&l, r, d).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut forced = 0;
        for k in 0..600 {
            let p = 0.6 + 0.2 * (k % 3) as f64 / 2.0;
            let c = random_config(&l, p, &mut rng);
            if rects.iter().all(|r| r.holds(&c)) {
                forced += 1;
                assert!(ev.holds(&l, &c));
            }
        }
        assert!(forced > 100, "only {forced} forced samples");
    }

    #[test]
    fn event_spec_round_trip() {
        for s in ["crossing:h:0,0,32,16", "dual-crossing:v:1,2,5,9", "annulus:alpha=2,n=3", "two-point:0,0,4,2", "edge:7"] {
            let e: EventSpec = s.parse().unwrap();
            assert_eq!(e.to_string(), s);
        }
        assert_eq!(
            "crossing:h:0,0,32,16".parse::<EventSpec>().unwrap(),
            EventSpec::Crossing {
                direction: Direction::Horizontal,
                rect: RectSpec::new(0, 32, 0, 16)
            }
        );
        for bad in ["crossing:x:0,0,1,1", "crossing:h:0,0,1", "annulus:alpha=1,n=2", "blob", "crossing:h:0,0,0,4"] {
            assert!(bad.parse::<EventSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn compiled_events_agree_with_free_functions() {
        let l = Lattice::square_torus(6).unwrap();
        let bc = BoundaryCondition::periodic();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e1: EventSpec = "crossing:v:0,0,4,6".parse().unwrap();
        let e2: EventSpec = "two-point:0,0,2,2".parse().unwrap();
        let c1 = e1.compile(&l, &bc).unwrap();
        let c2 = e2.compile(&l, &bc).unwrap();
        for _ in 0..50 {
            let c = random_config(&l, 0.5, &mut rng);
            assert_eq!(c1.holds(&c), has_crossing(&l, &c, RectSpec::new(0, 4, 0, 6), Direction::Vertical).unwrap());
            let (a, b) = (l.vertex_at((0, 0)).unwrap(), l.vertex_at((2, 2)).unwrap());
            assert_eq!(c2.holds(&c), two_point(&l, &c, &bc, a, b).unwrap());
        }
    }
}
