//! Exhaustive enumeration over all `2^|E|` configurations of a small graph.
//!
//! Every quantity here is a weighted sum over configurations with weight
//! `p^o (1-p)^c q^k`. Sums are compensated and split into fixed index
//! chunks that are reduced in chunk order, so results do not depend on the
//! number of worker threads.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configuration::{BoundaryCondition, ClusterStructure, Configuration};
use crate::error::{invalid, Error, Result};
use crate::lattice::{Lattice, LatticeDescriptor};

/// Default enumeration cap on the edge count (`2^24` configurations).
pub const DEFAULT_CAP: usize = 24;

const CHUNKS: u64 = 1024;

/// A configuration predicate. Events must be pure and thread-safe.
pub type Event<'a> = dyn Fn(&Configuration) -> bool + Sync + 'a;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    pub q: f64,
}

impl Params {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return invalid(format!("p = {p} is outside [0, 1]"));
        }
        if q.is_nan() || q < 1.0 {
            return invalid(format!("q = {q} must be at least 1"));
        }
        Ok(Self { p, q })
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactResult {
    pub z: f64,
    pub probabilities: BTreeMap<String, f64>,
    pub edge_marginals: Vec<f64>,
}

/// One exported line of an exact computation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactRecord {
    pub lattice: LatticeDescriptor,
    pub bc: BoundaryCondition,
    pub p: f64,
    pub q: f64,
    pub event: String,
    pub probability: f64,
    #[serde(rename = "Z")]
    pub z: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FkgReport {
    pub p_a: f64,
    pub p_b: f64,
    pub p_ab: f64,
    /// `φ(A∩B) − φ(A)φ(B)`.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BcComparisonReport {
    pub low: f64,
    pub high: f64,
    /// `φ^high(A) − φ^low(A)`.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HammingReport {
    pub derivative: f64,
    pub p_a: f64,
    pub mean_hamming: f64,
    /// `4 φ(A) φ(H_A)`.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub derivative: f64,
    pub p_a: f64,
    pub influences: Vec<f64>,
    pub influence_sum: f64,
    pub max_influence: f64,
    /// `min_e φ(J_e)(1−φ(J_e)) / (p(1−p))`.
    pub constant: f64,
    /// Whether `dφ/dp ≥ constant · Σ_e I_A(e)`.
    pub derivative_bound_holds: bool,
    /// `max_e I_A(e) / (φ(A)(1−φ(A)) log|E| / |E|)`: the smallest constant
    /// for which the maximal-influence inequality holds on this instance.
    pub max_influence_constant: f64,
}

/// Slack allowed when asserting inequalities between enumerated quantities.
const INEQ_TOL: f64 = 1e-12;

/// Enumeration context for one lattice, boundary condition and parameter
/// pair.
pub struct Enumerator<'a> {
    lattice: &'a Lattice,
    bc: &'a BoundaryCondition,
    params: Params,
    /// `p^o (1−p)^(E−o)` indexed by `o`.
    edge_weight: Vec<f64>,
    /// `q^k` indexed by `k`.
    cluster_weight: Vec<f64>,
}

impl<'a> Enumerator<'a> {
    pub fn new(lattice: &'a Lattice, bc: &'a BoundaryCondition, params: Params) -> Result<Self> {
        Self::with_cap(lattice, bc, params, DEFAULT_CAP)
    }

    pub fn with_cap(
        lattice: &'a Lattice,
        bc: &'a BoundaryCondition,
        params: Params,
        cap: usize,
    ) -> Result<Self> {
        let params = Params::new(params.p, params.q)?;
        bc.validate(lattice)?;
        let edges = lattice.n_edges();
        if edges > cap.min(40) {
            return Err(Error::ResourceLimit { edges, cap });
        }
        let edge_weight = (0..=edges)
            .map(|o| params.p.powi(o as i32) * (1.0 - params.p).powi((edges - o) as i32))
            .collect();
        let cluster_weight = (0..=lattice.n_vertices()).map(|k| params.q.powi(k as i32)).collect();
        Ok(Self {
            lattice,
            bc,
            params,
            edge_weight,
            cluster_weight,
        })
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn lattice(&self) -> &Lattice {
        self.lattice
    }

    /// Weighted sums `Σ_ω w(ω) f_i(ω)` for `slots` observables, plus `Z`.
    ///
    /// `f` receives the configuration index, the configuration and a zeroed
    /// slot buffer to fill.
    pub fn sums<F>(&self, slots: usize, f: F) -> (f64, Vec<f64>)
    where
        F: Fn(u64, &Configuration, &mut [f64]) + Sync,
    {
        let total = 1u64 << self.lattice.n_edges();
        let chunks = total.min(CHUNKS);
        let per = total.div_ceil(chunks);
        let partials: Vec<Vec<CompensatedSum>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![CompensatedSum::default(); slots + 1];
                let mut config = Configuration::closed(self.lattice);
                let mut clusters = ClusterStructure::new(self.lattice, &config, self.bc)
                    .expect("validated at construction");
                let mut buf = vec![0.0; slots];
                for index in c * per..((c + 1) * per).min(total) {
                    config.load_index(index);
                    let w = self.weight_with(&config, &mut clusters);
                    if w == 0.0 {
                        continue;
                    }
                    acc[0].add(w);
                    buf.iter_mut().for_each(|x| *x = 0.0);
                    f(index, &config, &mut buf);
                    for (a, &x) in acc[1..].iter_mut().zip(&buf) {
                        if x != 0.0 {
                            a.add(w * x);
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total_acc = vec![CompensatedSum::default(); slots + 1];
        for part in &partials {
            for (t, p) in total_acc.iter_mut().zip(part) {
                t.merge(p);
            }
        }
        let z = total_acc[0].value();
        (z, total_acc[1..].iter().map(|s| s.value()).collect())
    }

    /// Expectations `φ(f_i)` of the observables filled in by `f`.
    pub fn expectations<F>(&self, slots: usize, f: F) -> Vec<f64>
    where
        F: Fn(u64, &Configuration, &mut [f64]) + Sync,
    {
        let (z, sums) = self.sums(slots, f);
        sums.into_iter().map(|s| s / z).collect()
    }

    #[inline]
    fn weight_with(&self, config: &Configuration, clusters: &mut ClusterStructure) -> f64 {
        clusters.rebuild(self.lattice, config, self.bc);
        self.edge_weight[config.count_open()] * self.cluster_weight[clusters.k()]
    }

    /// Unnormalised weight `p^o (1−p)^c q^k` of one configuration.
    pub fn weight(&self, config: &Configuration) -> Result<f64> {
        let mut clusters = ClusterStructure::new(self.lattice, config, self.bc)?;
        Ok(self.weight_with(config, &mut clusters))
    }

    pub fn partition_function(&self) -> f64 {
        self.sums(0, |_, _, _| {}).0
    }

    pub fn probability(&self, event: &Event) -> f64 {
        self.expectations(1, |_, c, out| out[0] = f64::from(u8::from(event(c))))[0]
    }

    /// `φ(J_e)` for every edge.
    pub fn edge_marginals(&self) -> Vec<f64> {
        self.expectations(self.lattice.n_edges(), |_, c, out| {
            for e in c.open_edges() {
                out[e] = 1.0;
            }
        })
    }

    /// `Z`, the probabilities of named events and all edge marginals in one
    /// pass.
    pub fn evaluate(&self, events: &[(&str, &Event)]) -> ExactResult {
        let n_e = self.lattice.n_edges();
        let (z, sums) = self.sums(n_e + events.len(), |_, c, out| {
            for e in c.open_edges() {
                out[e] = 1.0;
            }
            for (k, (_, ev)) in events.iter().enumerate() {
                if ev(c) {
                    out[n_e + k] = 1.0;
                }
            }
        });
        ExactResult {
            z,
            edge_marginals: sums[..n_e].iter().map(|s| s / z).collect(),
            probabilities: events
                .iter()
                .zip(&sums[n_e..])
                .map(|((name, _), s)| (name.to_string(), s / z))
                .collect(),
        }
    }

    pub fn record(&self, name: &str, event: &Event) -> ExactRecord {
        let result = self.evaluate(&[(name, event)]);
        ExactRecord {
            lattice: self.lattice.descriptor(),
            bc: self.bc.clone(),
            p: self.params.p,
            q: self.params.q,
            event: name.to_string(),
            probability: result.probabilities[name],
            z: result.z,
        }
    }

    /// `I_A(e) = φ(A | J_e = 1) − φ(A | J_e = 0)`.
    pub fn influence(&self, event: &Event, e: usize) -> Result<f64> {
        if e >= self.lattice.n_edges() {
            return invalid(format!("edge {e} out of range"));
        }
        let v = self.expectations(3, |_, c, out| {
            let a = event(c);
            let j = c.is_open(e);
            out[0] = f64::from(u8::from(a && j));
            out[1] = f64::from(u8::from(j));
            out[2] = f64::from(u8::from(a));
        });
        let (aj, j, a) = (v[0], v[1], v[2]);
        if j <= 0.0 || j >= 1.0 {
            return Err(Error::DegenerateConditioning(format!(
                "edge {e} has φ(J_e) = {j}; conditioning on its state is undefined"
            )));
        }
        Ok(aj / j - (a - aj) / (1.0 - j))
    }

    /// `φ(A)`, `φ(J_e)` and `φ(A J_e)` for every edge in one pass.
    fn edge_moments(&self, event: &Event) -> (f64, Vec<f64>, Vec<f64>) {
        let n_e = self.lattice.n_edges();
        let v = self.expectations(2 * n_e + 1, |_, c, out| {
            let a = event(c);
            if a {
                out[2 * n_e] = 1.0;
            }
            for e in c.open_edges() {
                out[e] = 1.0;
                if a {
                    out[n_e + e] = 1.0;
                }
            }
        });
        (v[2 * n_e], v[..n_e].to_vec(), v[n_e..2 * n_e].to_vec())
    }

    fn require_interior_p(&self) -> Result<()> {
        let p = self.params.p;
        if p <= 0.0 || p >= 1.0 {
            return invalid(format!("the derivative in p needs 0 < p < 1, got {p}"));
        }
        Ok(())
    }

    /// `dφ(A)/dp = (1/(p(1−p))) Σ_e [φ(1_A J_e) − φ(J_e) φ(A)]`.
    pub fn russo_derivative(&self, event: &Event) -> Result<f64> {
        self.require_interior_p()?;
        let (a, j, aj) = self.edge_moments(event);
        let p = self.params.p;
        let mut s = CompensatedSum::default();
        for (je, aje) in j.iter().zip(&aj) {
            s.add(aje - je * a);
        }
        Ok(s.value() / (p * (1.0 - p)))
    }

    /// Derivative, influences and the constants of the influence bounds.
    pub fn influence_report(&self, event: &Event) -> Result<InfluenceReport> {
        self.require_interior_p()?;
        let (a, j, aj) = self.edge_moments(event);
        let p = self.params.p;
        let scale = p * (1.0 - p);
        let mut influences = Vec::with_capacity(j.len());
        let mut derivative = CompensatedSum::default();
        let mut constant = f64::INFINITY;
        for (e, (&je, &aje)) in j.iter().zip(&aj).enumerate() {
            if je <= 0.0 || je >= 1.0 {
                return Err(Error::DegenerateConditioning(format!("edge {e} is almost surely fixed")));
            }
            derivative.add(aje - je * a);
            influences.push(aje / je - (a - aje) / (1.0 - je));
            constant = constant.min(je * (1.0 - je) / scale);
        }
        let derivative = derivative.value() / scale;
        let influence_sum: f64 = influences.iter().sum();
        let max_influence = influences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = j.len() as f64;
        let denom = a * (1.0 - a) * n.ln() / n;
        Ok(InfluenceReport {
            derivative,
            p_a: a,
            derivative_bound_holds: derivative >= constant * influence_sum - INEQ_TOL,
            influence_sum,
            max_influence,
            constant,
            max_influence_constant: if denom > 0.0 { max_influence / denom } else { f64::INFINITY },
            influences,
        })
    }

    /// Checks `dφ(A)/dp ≥ 4 φ(A) φ(H_A)`, with `hamming` the distance of a
    /// configuration to `A`.
    pub fn hamming_report<H>(&self, event: &Event, hamming: H) -> Result<HammingReport>
    where
        H: Fn(&Configuration) -> u32 + Sync,
    {
        self.require_interior_p()?;
        let v = self.expectations(4, |_, c, out| {
            let a = event(c);
            let o = c.count_open() as f64;
            out[0] = f64::from(u8::from(a));
            out[1] = o;
            out[2] = if a { o } else { 0.0 };
            out[3] = f64::from(hamming(c));
        });
        let p = self.params.p;
        let derivative = (v[2] - v[0] * v[1]) / (p * (1.0 - p));
        let bound = 4.0 * v[0] * v[3];
        Ok(HammingReport {
            derivative,
            p_a: v[0],
            mean_hamming: v[3],
            bound,
            holds: derivative >= bound - INEQ_TOL,
        })
    }

    /// `φ(A∩B) ≥ φ(A)φ(B)` after verifying both events are increasing.
    pub fn check_fkg(&self, a: &Event, b: &Event) -> Result<FkgReport> {
        verify_increasing(self.lattice, a)?;
        verify_increasing(self.lattice, b)?;
        let v = self.expectations(3, |_, c, out| {
            let (x, y) = (a(c), b(c));
            out[0] = f64::from(u8::from(x));
            out[1] = f64::from(u8::from(y));
            out[2] = f64::from(u8::from(x && y));
        });
        let margin = v[2] - v[0] * v[1];
        Ok(FkgReport {
            p_a: v[0],
            p_b: v[1],
            p_ab: v[2],
            margin,
            holds: margin >= -INEQ_TOL,
        })
    }
}

/// Truth table of `event` over all configurations, one bit per index.
pub fn event_table(lattice: &Lattice, event: &Event, cap: usize) -> Result<Vec<u64>> {
    let edges = lattice.n_edges();
    if edges > cap.min(40) {
        return Err(Error::ResourceLimit { edges, cap });
    }
    let total = 1u64 << edges;
    let words = total.div_ceil(64) as usize;
    let table = (0..words)
        .into_par_iter()
        .map(|w| {
            let mut config = Configuration::closed(lattice);
            let mut bits = 0u64;
            for b in 0..64u64 {
                let index = w as u64 * 64 + b;
                if index >= total {
                    break;
                }
                config.load_index(index);
                if event(&config) {
                    bits |= 1 << b;
                }
            }
            bits
        })
        .collect();
    Ok(table)
}

/// Exhaustive flip test: fails with invalid-argument if opening some edge
/// destroys the event in some configuration.
pub fn verify_increasing(lattice: &Lattice, event: &Event) -> Result<()> {
    let table = event_table(lattice, event, DEFAULT_CAP)?;
    let edges = lattice.n_edges();
    let total = 1u64 << edges;
    let bit = |i: u64| (table[(i >> 6) as usize] >> (i & 63)) & 1 == 1;
    let violation = (0..edges).into_par_iter().find_map_any(|e| {
        let mask = 1u64 << e;
        (0..total)
            .filter(|i| i & mask == 0)
            .find(|&i| bit(i) && !bit(i | mask))
            .map(|i| (e, i))
    });
    match violation {
        Some((e, i)) => invalid(format!(
            "event is not increasing: opening edge {e} in configuration {i:#x} destroys it"
        )),
        None => Ok(()),
    }
}

pub fn partition_function(lattice: &Lattice, bc: &BoundaryCondition, params: Params) -> Result<f64> {
    Ok(Enumerator::new(lattice, bc, params)?.partition_function())
}

pub fn event_probability(
    lattice: &Lattice,
    bc: &BoundaryCondition,
    params: Params,
    event: &Event,
) -> Result<f64> {
    Ok(Enumerator::new(lattice, bc, params)?.probability(event))
}

pub fn edge_influence(
    lattice: &Lattice,
    bc: &BoundaryCondition,
    params: Params,
    event: &Event,
    e: usize,
) -> Result<f64> {
    Enumerator::new(lattice, bc, params)?.influence(event, e)
}

pub fn russo_derivative(
    lattice: &Lattice,
    bc: &BoundaryCondition,
    params: Params,
    event: &Event,
) -> Result<f64> {
    Enumerator::new(lattice, bc, params)?.russo_derivative(event)
}

pub fn check_fkg(
    lattice: &Lattice,
    bc: &BoundaryCondition,
    params: Params,
    a: &Event,
    b: &Event,
) -> Result<FkgReport> {
    Enumerator::new(lattice, bc, params)?.check_fkg(a, b)
}

/// `φ^low(A) ≤ φ^high(A)` for `low ≤ high` in the wiring order.
pub fn check_bc_comparison(
    lattice: &Lattice,
    params: Params,
    event: &Event,
    low: &BoundaryCondition,
    high: &BoundaryCondition,
) -> Result<BcComparisonReport> {
    low.validate(lattice)?;
    high.validate(lattice)?;
    if !low.refines(high, lattice.n_vertices()) {
        return invalid("boundary conditions are not ordered: the low one must refine the high one");
    }
    verify_increasing(lattice, event)?;
    let lo = Enumerator::new(lattice, low, params)?.probability(event);
    let hi = Enumerator::new(lattice, high, params)?.probability(event);
    Ok(BcComparisonReport {
        low: lo,
        high: hi,
        margin: hi - lo,
        holds: hi - lo >= -INEQ_TOL,
    })
}
