//! Checks against values computed by routes that share no code with the
//! quantity under test.

use rcmodel::critical::{self, PlanarLattice};
use rcmodel::events::{Crossing, Direction};
use rcmodel::sampler::{self, ChainState};
use rcmodel::{BoundaryCondition, Configuration, Enumerator, Kernel, Lattice, Params, RectSpec, RunConfig};

/// Probability that two sites carry the same Potts colour, by summing the
/// Potts Gibbs weights `exp(beta * #agreeing edges)` over all colourings.
fn potts_agreement(l: &Lattice, q: u32, beta: f64, x: usize, y: usize) -> f64 {
    let n = l.n_vertices();
    let edges: Vec<(usize, usize)> = l.edges().collect();
    let mut sigma = vec![0u32; n];
    let (mut z, mut agree) = (0.0, 0.0);
    let total = (q as u64).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for s in sigma.iter_mut() {
            *s = (c % q as u64) as u32;
            c /= q as u64;
        }
        let same = edges.iter().filter(|&&(a, b)| sigma[a] == sigma[b]).count();
        let w = (beta * same as f64).exp();
        z += w;
        if sigma[x] == sigma[y] {
            agree += w;
        }
    }
    agree / z
}

fn farthest_from_zero(l: &Lattice) -> usize {
    (1..l.n_vertices())
        .max_by(|&a, &b| l.distance(0, a).total_cmp(&l.distance(0, b)))
        .unwrap()
}

#[test]
fn potts_two_point_agreement_matches_fk_connectivity() {
    let l = Lattice::square_torus(3).unwrap();
    let bc = BoundaryCondition::periodic();
    let (x, y) = (0, farthest_from_zero(&l));
    for q in [2u32, 3] {
        for beta in [0.4f64, 0.9, 1.5] {
            let p = 1.0 - (-beta).exp();
            let en = Enumerator::new(&l, &bc, Params::new(p, q as f64).unwrap()).unwrap();
            let phi = en.probability(&|c: &Configuration| {
                rcmodel::configuration::connected(&l, c, &bc, x, y).unwrap()
            });
            let fk = 1.0 / q as f64 + (1.0 - 1.0 / q as f64) * phi;
            let potts = potts_agreement(&l, q, beta, x, y);
            assert!((fk - potts).abs() < 1e-12, "q={q} beta={beta}: {fk} vs {potts}");
        }
    }
}

#[test]
fn sampled_potts_colouring_has_the_exact_agreement_rate() {
    let l = Lattice::square_torus(3).unwrap();
    let bc = BoundaryCondition::periodic();
    let (q, beta) = (2u32, 0.9f64);
    let p = 1.0 - (-beta).exp();
    let (x, y) = (0, farthest_from_zero(&l));
    let target = potts_agreement(&l, q, beta, x, y);

    let mut chain = ChainState::new(&l, bc.clone(), Params::new(p, q as f64).unwrap(), 17, 0).unwrap();
    let mut colour_rng = sampler::chain_rng(17, 1);
    for _ in 0..1000 {
        chain.step(Kernel::Cluster);
    }
    let mut xs = Vec::new();
    for _ in 0..200_000 {
        chain.step(Kernel::Cluster);
        let sigma = sampler::potts_from_fk(&l, chain.config(), &bc, q as f64, &mut colour_rng).unwrap();
        assert!(sigma.iter().all(|&s| (1..=q).contains(&s)));
        xs.push(f64::from(u8::from(sigma[x] == sigma[y])));
    }
    let s = sampler::ChainSummary::from_series(&xs, 50, 1000, true);
    let e = s.estimate(17, 1);
    assert!(
        e.within(target, 4.0),
        "agreement {} ± {} vs exact {target}",
        e.mean,
        e.std_error
    );
}

#[test]
fn sampled_crossing_matches_enumeration_for_every_kernel() {
    let l = Lattice::square_torus(3).unwrap();
    let bc = BoundaryCondition::periodic();
    let cross = Crossing::new(&l, RectSpec::new(0, 3, 0, 3), Direction::Horizontal).unwrap();
    for (q, p) in [(2.0, 0.55), (1.5, 0.4)] {
        let params = Params::new(p, q).unwrap();
        let exact = Enumerator::new(&l, &bc, params).unwrap().probability(&|c| cross.holds(c));
        for kernel in [Kernel::HeatBath, Kernel::Cluster, Kernel::Mixed] {
            let run = RunConfig::new(kernel, 60_000, 5).chains(2).burn_in(500);
            let obs = sampler::indicator(|c| cross.holds(c));
            let e = sampler::estimate(&l, &bc, params, &obs, &run).unwrap();
            assert!(
                e.within(exact, 4.0),
                "{kernel:?} q={q} p={p}: {} ± {} vs {exact}",
                e.mean,
                e.std_error
            );
        }
    }
}

#[test]
fn wired_box_edge_marginals_match_enumeration() {
    let l = Lattice::square_box(3).unwrap();
    let bc = BoundaryCondition::wired(&l);
    let params = Params::new(0.45, 3.0).unwrap();
    let exact = Enumerator::new(&l, &bc, params).unwrap().edge_marginals();
    let run = RunConfig::new(Kernel::Mixed, 40_000, 11).chains(2).burn_in(500);
    let edges = l.n_edges();
    let obs = |c: &Configuration, out: &mut [f64]| {
        for (e, o) in out.iter_mut().enumerate() {
            *o = f64::from(u8::from(c.is_open(e)));
        }
    };
    let est = sampler::estimate_vector(&l, &bc, params, edges, &obs, &run).unwrap();
    for (e, (m, x)) in est.iter().zip(&exact).enumerate() {
        assert!(m.within(*x, 4.5), "edge {e}: {} ± {} vs {x}", m.mean, m.std_error);
    }
}

#[test]
fn triangular_and_hexagonal_critical_points_are_dual() {
    for q in [1.0, 2.0, 3.0, 4.0, 7.5] {
        let tri = critical::critical(PlanarLattice::Triangular, q).unwrap();
        let hex = critical::critical(PlanarLattice::Hexagonal, q).unwrap();
        let sq = critical::critical(PlanarLattice::Square, q).unwrap();
        assert!((critical::dual_parameter(tri.p_c, q) - hex.p_c).abs() < 1e-12);
        assert!((critical::dual_parameter(sq.p_c, q) - sq.p_c).abs() < 1e-12);
        // The triangular point solves y^3 + 3y^2 = q.
        let y = tri.y_c;
        assert!((y * y * y + 3.0 * y * y - q).abs() < 1e-10);
    }
}
