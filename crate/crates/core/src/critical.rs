//! Duality map, self-dual point, critical equations of the triangular and
//! hexagonal lattices, and the star–triangle check.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::union_find::UnionFind;

/// `p* = (1−p)q / ((1−p)q + p)`.
pub fn dual_parameter(p: f64, q: f64) -> f64 {
    let a = (1.0 - p) * q;
    a / (a + p)
}

/// `p_sd = √q / (1 + √q)`, the fixed point of [`dual_parameter`].
pub fn self_dual_point(q: f64) -> f64 {
    let s = q.sqrt();
    s / (1.0 + s)
}

/// `y = p / (1−p)`.
pub fn odds(p: f64) -> f64 {
    p / (1.0 - p)
}

/// Inverse of [`odds`].
pub fn from_odds(y: f64) -> f64 {
    y / (1.0 + y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanarLattice {
    Square,
    Triangular,
    Hexagonal,
}

impl std::str::FromStr for PlanarLattice {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Self::Square),
            "triangular" => Ok(Self::Triangular),
            "hexagonal" => Ok(Self::Hexagonal),
            other => invalid(format!("unknown lattice '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalSolution {
    pub q: f64,
    pub y_c: f64,
    pub p_c: f64,
    pub residual: f64,
}

fn check_q(q: f64) -> Result<()> {
    if q.is_nan() || q < 1.0 || q.is_infinite() {
        return invalid(format!("q = {q} must be a finite number at least 1"));
    }
    Ok(())
}

/// Root of an increasing function on `[lo, hi]` with `f(lo) < 0 < f(hi)`:
/// Newton steps, replaced by bisection whenever they leave the bracket.
fn safeguarded_newton(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fy = f(y);
        if fy == 0.0 {
            return y;
        }
        if fy < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let d = df(y);
        let newton = y - fy / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - y).abs() <= 1e-14 * y.abs().max(1.0) {
            return next;
        }
        y = next;
    }
    y
}

/// Positive root of `y³ + 3y² − q = 0`.
pub fn triangular_critical(q: f64) -> Result<CriticalSolution> {
    check_q(q)?;
    let f = |y: f64| y * y * (y + 3.0) - q;
    let df = |y: f64| 3.0 * y * (y + 2.0);
    // f(0) = −q and f(q^{1/3}) = 3 q^{2/3} > 0.
    let y = safeguarded_newton(f, df, 0.0, q.cbrt());
    Ok(CriticalSolution {
        q,
        y_c: y,
        p_c: from_odds(y),
        residual: f(y),
    })
}

/// Root of `y³ − 3qy − q² = 0` above `√(3q)`.
pub fn hexagonal_critical(q: f64) -> Result<CriticalSolution> {
    check_q(q)?;
    let f = |y: f64| y * (y * y - 3.0 * q) - q * q;
    let df = |y: f64| 3.0 * (y * y - q);
    // f(√(3q)) = −q² < 0 and the cubic increases beyond √q.
    let lo = (3.0 * q).sqrt();
    let mut hi = lo + 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    let y = safeguarded_newton(f, df, lo, hi);
    Ok(CriticalSolution {
        q,
        y_c: y,
        p_c: from_odds(y),
        residual: f(y),
    })
}

/// Self-dual point of the square lattice as a solution of `y² = q`.
pub fn square_critical(q: f64) -> Result<CriticalSolution> {
    check_q(q)?;
    let y = q.sqrt();
    Ok(CriticalSolution {
        q,
        y_c: y,
        p_c: self_dual_point(q),
        residual: y * y - q,
    })
}

pub fn critical(lattice: PlanarLattice, q: f64) -> Result<CriticalSolution> {
    match lattice {
        PlanarLattice::Square => square_critical(q),
        PlanarLattice::Triangular => triangular_critical(q),
        PlanarLattice::Hexagonal => hexagonal_critical(q),
    }
}

/// The five partitions of three terminals `{a, b, c}` in a fixed order.
pub const PARTITIONS: [&str; 5] = ["a|b|c", "ab|c", "ac|b", "bc|a", "abc"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarTriangleReport {
    pub q: f64,
    pub p_triangle: f64,
    pub p_star: f64,
    /// Law of the induced terminal partition, in [`PARTITIONS`] order.
    pub triangle: [f64; 5],
    pub star: [f64; 5],
    pub max_deviation: f64,
}

fn partition_index(uf: &mut UnionFind) -> usize {
    match (uf.same(0, 1), uf.same(0, 2), uf.same(1, 2)) {
        (true, true, _) => 4,
        (true, false, _) => 1,
        (false, true, _) => 2,
        (false, false, true) => 3,
        (false, false, false) => 0,
    }
}

/// FK law (free boundary) of the terminal partition on a gadget with
/// vertices `0..n` (terminals `0, 1, 2`) and the given edges, each open with
/// probability `p`.
fn gadget_law(n: usize, edges: &[(usize, usize)], p: f64, q: f64) -> [f64; 5] {
    let mut law = [0.0; 5];
    let mut uf = UnionFind::new(n);
    for mask in 0u32..1 << edges.len() {
        uf.reset(n);
        let mut open = 0;
        for (i, &(a, b)) in edges.iter().enumerate() {
            if mask >> i & 1 == 1 {
                open += 1;
                uf.union(a, b);
            }
        }
        let w = p.powi(open) * (1.0 - p).powi(edges.len() as i32 - open) * q.powi(uf.set_count() as i32);
        law[partition_index(&mut uf)] += w;
    }
    let z: f64 = law.iter().sum();
    law.map(|x| x / z)
}

/// Compares the triangle with edge parameter `p_triangle` against the star
/// with the dual parameter `p*(p_triangle)` (centre vertex 3).
pub fn star_triangle_at(q: f64, p_triangle: f64) -> Result<StarTriangleReport> {
    check_q(q)?;
    if !(0.0..=1.0).contains(&p_triangle) {
        return invalid(format!("p = {p_triangle} is outside [0, 1]"));
    }
    let p_star = dual_parameter(p_triangle, q);
    let triangle = gadget_law(3, &[(0, 1), (1, 2), (0, 2)], p_triangle, q);
    let star = gadget_law(4, &[(0, 3), (1, 3), (2, 3)], p_star, q);
    let max_deviation = triangle
        .iter()
        .zip(&star)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(StarTriangleReport {
        q,
        p_triangle,
        p_star,
        triangle,
        star,
        max_deviation,
    })
}

/// Star–triangle comparison at the triangular critical point.
pub fn star_triangle_check(q: f64) -> Result<StarTriangleReport> {
    star_triangle_at(q, triangular_critical(q)?.p_c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_parameter_values() {
        assert_eq!(dual_parameter(0.5, 1.0), 0.5);
        assert_eq!(dual_parameter(0.0, 3.0), 1.0);
        assert_eq!(dual_parameter(1.0, 3.0), 0.0);
        assert!((dual_parameter(0.3, 2.0) - 1.4 / 1.7).abs() < 1e-15);
        for &q in &[1.0, 1.5, 2.0, 4.0] {
            for i in 1..100 {
                let p = i as f64 / 100.0;
                let ps = dual_parameter(p, q);
                assert!((ps * p / ((1.0 - ps) * (1.0 - p)) - q).abs() < 1e-12);
                assert!((dual_parameter(ps, q) - p).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn self_dual_values() {
        assert_eq!(self_dual_point(1.0), 0.5);
        assert!((self_dual_point(4.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((self_dual_point(2.0) - 0.585_786_437_6).abs() < 1e-10);
        for i in 0..=90 {
            let q = 1.0 + i as f64 / 10.0;
            let ps = self_dual_point(q);
            assert!((dual_parameter(ps, q) - ps).abs() < 1e-14);
        }
    }

    #[test]
    fn self_dual_point_is_limit_of_averaged_iteration() {
        // p ↦ p* is an involution, so iterate its average with the identity.
        for &q in &[1.0, 2.0, 3.0, 7.5] {
            let mut p = 0.1;
            for _ in 0..200 {
                p = 0.5 * (p + dual_parameter(p, q));
            }
            assert!((p - self_dual_point(q)).abs() < 1e-13);
        }
    }

    #[test]
    fn triangular_roots() {
        let s = triangular_critical(1.0).unwrap();
        assert!((s.y_c - 0.532_088_9).abs() < 1e-7);
        assert!((s.p_c - 0.347_296_4).abs() < 1e-7);
        // q = 2: y = √3 − 1.
        let s = triangular_critical(2.0).unwrap();
        assert!((s.y_c - (3f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!((s.p_c - 0.422_649_7).abs() < 1e-7);
        let mut prev = 0.0;
        for i in 0..=90 {
            let s = triangular_critical(1.0 + i as f64 / 10.0).unwrap();
            assert!(s.residual.abs() <= 1e-12 && s.p_c > prev && s.p_c < 1.0);
            prev = s.p_c;
        }
    }

    #[test]
    fn hexagonal_roots() {
        let s = hexagonal_critical(1.0).unwrap();
        assert!((s.y_c - 1.879_385_2).abs() < 1e-7);
        assert!((s.p_c - 0.652_703_6).abs() < 1e-7);
        assert!(hexagonal_critical(4.0).unwrap().residual.abs() < 1e-12);
        for &q in &[1.0, 1.5, 2.0, 3.0, 4.0] {
            let t = triangular_critical(q).unwrap();
            let h = hexagonal_critical(q).unwrap();
            assert!((h.p_c - dual_parameter(t.p_c, q)).abs() < 1e-10);
            assert!(h.y_c > (3.0 * q).sqrt());
        }
        assert!(hexagonal_critical(0.5).is_err());
    }

    #[test]
    fn star_triangle() {
        for &q in &[1.0, 2.0, 3.0] {
            let r = star_triangle_check(q).unwrap();
            assert!(r.max_deviation < 1e-10, "q={q}: {}", r.max_deviation);
            assert!((r.triangle.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((r.star.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let off = star_triangle_at(q, r.p_triangle + 0.1).unwrap();
            assert!(off.max_deviation > 1e-3);
        }
        assert!(star_triangle_check(1.0).unwrap().max_deviation < 1e-12);
    }

    #[test]
    fn lattice_names_parse() {
        assert_eq!("hexagonal".parse::<PlanarLattice>().unwrap(), PlanarLattice::Hexagonal);
        assert!("cubic".parse::<PlanarLattice>().is_err());
        assert_eq!(critical(PlanarLattice::Square, 4.0).unwrap().p_c, self_dual_point(4.0));
    }
}
