//! Markov chain Monte Carlo for the random-cluster measure.
//!
//! Two kernels leave the measure invariant. The heat-bath kernel resamples one
//! edge at a time from its exact conditional law and consumes exactly one
//! uniform per edge, which makes runs at different `p` pathwise monotone when
//! they share a seed. The cluster kernel is a Chayes–Machta move with a single
//! active colour: every cluster of `ω ∪ ξ` is activated with probability
//! `1/q`, then every edge with both endpoints active is redrawn as an
//! independent Bernoulli(`p`) variable. Wired classes behave like a contracted
//! super-vertex, so the boundary cluster is activated as a whole.
//!
//! Chains are seeded with ChaCha8 keyed by the run seed and using the chain
//! index as stream. Many chains run in parallel and are merged in index order,
//! so estimates do not depend on the number of worker threads.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configuration::{BoundaryCondition, ClusterStructure, Configuration};
use crate::error::{invalid, Result};
use crate::exact::Params;
use crate::lattice::Lattice;
use crate::snapshot::Snapshot;
use crate::union_find::UnionFind;

/// Real-valued function of a configuration, evaluated once per measurement.
pub type Observable<'a> = dyn Fn(&Configuration) -> f64 + Sync + 'a;
/// Observable filling a slice of values per measurement.
pub type VectorObservable<'a> = dyn Fn(&Configuration, &mut [f64]) + Sync + 'a;

/// Minimal burn-in, in sweeps, when it is chosen adaptively.
pub const MIN_BURN_IN: usize = 1000;
/// Number of batches used for batched-means errors.
pub const DEFAULT_BATCHES: usize = 50;

/// Probability that an edge is open given the rest of the configuration.
///
/// At `p = p_sd(q)` and disconnected endpoints this equals `1/(1+√q)`.
pub fn heatbath_open_probability(p: f64, q: f64, connected_off_edge: bool) -> f64 {
    if connected_off_edge {
        p
    } else {
        p / (p + (1.0 - p) * q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// One systematic heat-bath sweep over all edges.
    HeatBath,
    /// One Chayes–Machta cluster move.
    Cluster,
    /// A heat-bath sweep followed by a cluster move.
    Mixed,
}

impl std::str::FromStr for Kernel {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heatbath" | "heat-bath" => Ok(Self::HeatBath),
            "cluster" => Ok(Self::Cluster),
            "mixed" => Ok(Self::Mixed),
            other => invalid(format!("unknown kernel '{other}'")),
        }
    }
}

/// Creates the generator of chain `stream` for a run seeded with `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mutable state of one chain together with its scratch buffers.
#[derive(Clone, Debug)]
pub struct ChainState<'a> {
    lattice: &'a Lattice,
    bc: BoundaryCondition,
    params: Params,
    config: Configuration,
    rng: ChaCha8Rng,
    seed: u64,
    sweeps: u64,
    // Wired class of each vertex (u32::MAX if none) and class member lists.
    class_of: Vec<u32>,
    // Search scratch, indexed by vertices then one virtual node per class.
    stamp: Vec<u32>,
    generation: u32,
    stack: Vec<usize>,
    uf: UnionFind,
    active: Vec<u8>,
}

impl<'a> ChainState<'a> {
    /// Chain started from the all-closed configuration.
    pub fn new(lattice: &'a Lattice, bc: BoundaryCondition, params: Params, seed: u64, stream: u64) -> Result<Self> {
        Self::from_config(lattice, bc, params, Configuration::closed(lattice), seed, stream)
    }

    pub fn from_config(
        lattice: &'a Lattice,
        bc: BoundaryCondition,
        params: Params,
        config: Configuration,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        bc.validate(lattice)?;
        config.check(lattice)?;
        let n = lattice.n_vertices();
        let nodes = n + bc.classes().len();
        Ok(Self {
            lattice,
            class_of: bc.class_of(n),
            bc,
            params,
            config,
            rng: chain_rng(seed, stream),
            seed,
            sweeps: 0,
            stamp: vec![0; nodes],
            generation: 0,
            stack: Vec::new(),
            uf: UnionFind::new(nodes),
            active: vec![0; nodes],
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn bc(&self) -> &BoundaryCondition {
        &self.bc
    }

    pub fn lattice(&self) -> &Lattice {
        self.lattice
    }

    /// Number of kernel applications performed so far.
    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        Snapshot::capture(self.lattice, &self.config, Some(self.seed))
    }

    /// Whether the endpoints of `e` are joined in `ω ∪ ξ` without using `e`.
    pub fn connected_off_edge(&mut self, e: usize) -> bool {
        let (a, b) = self.lattice.edge(e);
        if a == b {
            return true;
        }
        let n = self.lattice.n_vertices();
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        let gen = self.generation;
        self.stack.clear();
        self.stack.push(a);
        self.stamp[a] = gen;
        while let Some(v) = self.stack.pop() {
            if v >= n {
                for &w in &self.bc.classes()[v - n] {
                    if w == b {
                        return true;
                    }
                    if self.stamp[w] != gen {
                        self.stamp[w] = gen;
                        self.stack.push(w);
                    }
                }
                continue;
            }
            let c = self.class_of[v];
            if c != u32::MAX {
                let node = n + c as usize;
                if self.stamp[node] != gen {
                    self.stamp[node] = gen;
                    self.stack.push(node);
                }
            }
            for (w, f) in self.lattice.neighbors(v) {
                if f == e || !self.config.is_open(f) {
                    continue;
                }
                if w == b {
                    return true;
                }
                if self.stamp[w] != gen {
                    self.stamp[w] = gen;
                    self.stack.push(w);
                }
            }
        }
        false
    }

    /// Resamples edge `e` from its conditional law using the uniform `u`.
    pub fn heatbath_edge_update(&mut self, e: usize, u: f64) {
        let Params { p, q } = self.params;
        let prob = if q == 1.0 {
            p
        } else {
            heatbath_open_probability(p, q, self.connected_off_edge(e))
        };
        self.config.set(e, u < prob);
    }

    /// Heat-bath updates of every edge in index order.
    pub fn heatbath_sweep(&mut self) {
        for e in 0..self.config.len() {
            let u: f64 = self.rng.random();
            self.heatbath_edge_update(e, u);
        }
    }

    /// One Chayes–Machta move with a single active colour.
    pub fn cluster_update(&mut self) {
        let Params { p, q } = self.params;
        let n = self.lattice.n_vertices();
        let classes = self.bc.classes();
        self.uf.reset(n + classes.len());
        for (c, class) in classes.iter().enumerate() {
            for &v in class {
                self.uf.union(n + c, v);
            }
        }
        for e in self.config.open_edges() {
            let (a, b) = self.lattice.edge(e);
            self.uf.union(a, b);
        }
        // 0 = undecided, 1 = active, 2 = inactive, stored on roots.
        self.active.iter_mut().for_each(|x| *x = 0);
        let inv_q = 1.0 / q;
        for v in 0..n {
            let r = self.uf.find(v);
            if self.active[r] == 0 {
                let u: f64 = self.rng.random();
                self.active[r] = if u < inv_q { 1 } else { 2 };
            }
        }
        for e in 0..self.config.len() {
            let (a, b) = self.lattice.edge(e);
            let ra = self.uf.find(a);
            let rb = self.uf.find(b);
            if self.active[ra] == 1 && self.active[rb] == 1 {
                let u: f64 = self.rng.random();
                self.config.set(e, u < p);
            }
        }
    }

    /// Applies one step of `kernel`.
    pub fn step(&mut self, kernel: Kernel) {
        match kernel {
            Kernel::HeatBath => self.heatbath_sweep(),
            Kernel::Cluster => self.cluster_update(),
            Kernel::Mixed => {
                self.heatbath_sweep();
                self.cluster_update();
            }
        }
        self.sweeps += 1;
    }
}

/// Independent uniform colour in `1..=q` for every FK cluster (Edwards–Sokal
/// coupling). Wired classes form one cluster.
pub fn potts_from_fk<R: Rng + ?Sized>(
    lattice: &Lattice,
    config: &Configuration,
    bc: &BoundaryCondition,
    q: f64,
    rng: &mut R,
) -> Result<Vec<u32>> {
    if !(q >= 2.0 && q.fract() == 0.0 && q <= u32::MAX as f64) {
        return invalid(format!("Potts coupling needs an integer q >= 2, got {q}"));
    }
    let q = q as u32;
    let mut cs = ClusterStructure::new(lattice, config, bc)?;
    let labels = cs.labels();
    let mut colours = Vec::new();
    Ok(labels
        .iter()
        .map(|&l| {
            if l == colours.len() {
                colours.push(rng.random_range(1..=q));
            }
            colours[l]
        })
        .collect())
}

/// Sokal's windowed integrated autocorrelation time (in samples) with window
/// constant 6. Returns 0.5 for series without variance.
pub fn integrated_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.5;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for t in 1..n {
        let ct = xs[..n - t]
            .iter()
            .zip(&xs[t..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / n as f64;
        tau += ct / c0;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// Summary of one measured series, mergeable across chains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub n_samples: u64,
    /// Sum of the measurements.
    pub sum: f64,
    /// Sum of squared standard errors, each weighted by its sample count squared.
    pub weighted_var: f64,
    /// Sum of `n · tau_int` (tau in samples).
    pub weighted_tau: f64,
    /// Sum of `n / (2 tau_int)`.
    pub effective_samples: f64,
    pub converged: bool,
    pub complete: bool,
    pub chains: u64,
    pub burn_in: u64,
}

impl ChainSummary {
    /// Batched-means summary of one series. `converged` is false when there
    /// are too few samples or the batches are shorter than ten
    /// autocorrelation times.
    pub fn from_series(xs: &[f64], batches: usize, burn_in: u64, complete: bool) -> Self {
        let n = xs.len();
        let tau = integrated_autocorrelation(xs);
        let batches = batches.max(2);
        let mean = if n == 0 { 0.0 } else { xs.iter().sum::<f64>() / n as f64 };
        let (se, converged) = if n < 2 * batches {
            let var = if n > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            ((2.0 * tau * var / n.max(1) as f64).sqrt(), false)
        } else {
            let size = n / batches;
            let means: Vec<f64> = (0..batches)
                .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
                .collect();
            let bm = means.iter().sum::<f64>() / batches as f64;
            let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
            ((var / batches as f64).sqrt(), size as f64 >= 10.0 * tau)
        };
        let nf = n as f64;
        Self {
            n_samples: n as u64,
            sum: xs.iter().sum(),
            weighted_var: nf * nf * se * se,
            weighted_tau: nf * tau,
            effective_samples: nf / (2.0 * tau),
            converged,
            complete,
            chains: 1,
            burn_in,
        }
    }

    /// Combines two summaries. The operation is associative and commutative
    /// up to floating-point rounding.
    pub fn merge(&self, other: &Self) -> Self {
        Self {
            n_samples: self.n_samples + other.n_samples,
            sum: self.sum + other.sum,
            weighted_var: self.weighted_var + other.weighted_var,
            weighted_tau: self.weighted_tau + other.weighted_tau,
            effective_samples: self.effective_samples + other.effective_samples,
            converged: self.converged && other.converged,
            complete: self.complete && other.complete,
            chains: self.chains + other.chains,
            burn_in: self.burn_in.max(other.burn_in),
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n_samples.max(1) as f64
    }

    pub fn std_error(&self) -> f64 {
        self.weighted_var.sqrt() / self.n_samples.max(1) as f64
    }

    pub fn estimate(&self, seed: u64, sweeps_per_sample: usize) -> MCEstimate {
        let tau = if self.n_samples == 0 {
            0.5
        } else {
            self.weighted_tau / self.n_samples as f64
        };
        MCEstimate {
            mean: self.mean(),
            std_error: self.std_error(),
            n_samples: self.n_samples,
            tau_int: tau * sweeps_per_sample as f64,
            effective_samples: self.effective_samples,
            seed,
            n_chains: self.chains,
            burn_in: self.burn_in,
            converged: self.converged,
            complete: self.complete,
        }
    }
}

/// Monte Carlo estimate. `tau_int` is measured in sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub tau_int: f64,
    pub effective_samples: f64,
    pub seed: u64,
    pub n_chains: u64,
    pub burn_in: u64,
    /// False when batches were too short compared to the autocorrelation time.
    pub converged: bool,
    /// False when the wall-time cap stopped the run early.
    pub complete: bool,
}

impl MCEstimate {
    /// `|mean − target| ≤ k · std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

/// Budget and schedule of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kernel: Kernel,
    /// Measured kernel steps per chain (after burn-in).
    pub sweeps: usize,
    /// Burn-in per chain; `None` picks `max(1000, 10·tau_int)` adaptively.
    pub burn_in: Option<usize>,
    /// Kernel steps between measurements.
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub batches: usize,
    pub wall_time: Option<Duration>,
}

impl RunConfig {
    pub fn new(kernel: Kernel, sweeps: usize, seed: u64) -> Self {
        Self {
            kernel,
            sweeps,
            burn_in: None,
            thin: 1,
            chains: 1,
            seed,
            batches: DEFAULT_BATCHES,
            wall_time: None,
        }
    }

    pub fn burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = Some(burn_in);
        self
    }

    pub fn chains(mut self, chains: usize) -> Self {
        self.chains = chains;
        self
    }

    pub fn thin(mut self, thin: usize) -> Self {
        self.thin = thin;
        self
    }

    pub fn wall_time(mut self, cap: Duration) -> Self {
        self.wall_time = Some(cap);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.chains == 0 || self.thin == 0 {
            return invalid("sweeps, chains and thin must be positive");
        }
        Ok(())
    }
}

fn check_params(params: Params) -> Result<()> {
    if params.p <= 0.0 || params.p >= 1.0 {
        return invalid(format!("sampling needs 0 < p < 1, got {}", params.p));
    }
    Ok(())
}

/// Runs chain `stream` and returns one summary per observable.
pub fn run_chain(
    lattice: &Lattice,
    bc: &BoundaryCondition,
    params: Params,
    observables: &[&Observable],
    run: &RunConfig,
    stream: u64,
) -> Result<Vec<ChainSummary>> {
    let joint = scalar_bundle(observables);
    run_chain_vector(lattice, bc, params, observables.len(), &joint, run, stream)
}

fn scalar_bundle<'o>(observables: &'o [&'o Observable<'o>]) -> impl Fn(&Configuration, &mut [f64]) + Sync + 'o {
    move |c, out| {
        for (o, f) in out.iter_mut().zip(observables) {
            *o = f(c);
        }
    }
}

/// Like [`run_chain`] for an observable writing `dim` values per
/// measurement, which lets several quantities share one cluster search.
pub fn run_chain_vector(
    lattice: &Lattice,
    bc: &BoundaryCondition,
    params: Params,
    dim: usize,
    observable: &VectorObservable,
    run: &RunConfig,
    stream: u64,
) -> Result<Vec<ChainSummary>> {
    run.validate()?;
    check_params(params)?;
    let start = Instant::now();
    let out_of_time = |s: &Instant| run.wall_time.is_some_and(|cap| s.elapsed() > cap);
    let mut state = ChainState::new(lattice, bc.clone(), params, run.seed, stream)?;
    let mut complete = true;
    let mut buf = vec![0.0; dim];

    let burn_in = match run.burn_in {
        Some(b) => {
            for _ in 0..b {
                if out_of_time(&start) {
                    complete = false;
                    break;
                }
                state.step(run.kernel);
            }
            b
        }
        None => {
            // Pilot phases of MIN_BURN_IN steps until the burn-in done so far
            // covers ten autocorrelation times of every observable.
            let mut done = 0usize;
            let mut pilot = vec![Vec::with_capacity(MIN_BURN_IN); dim];
            loop {
                for series in pilot.iter_mut() {
                    series.clear();
                }
                for _ in 0..MIN_BURN_IN {
                    state.step(run.kernel);
                    observable(state.config(), &mut buf);
                    for (series, &x) in pilot.iter_mut().zip(&buf) {
                        series.push(x);
                    }
                }
                done += MIN_BURN_IN;
                let tau = pilot
                    .iter()
                    .map(|s| integrated_autocorrelation(s))
                    .fold(0.5f64, f64::max);
                if done as f64 >= 10.0 * tau || done >= 100 * MIN_BURN_IN {
                    break;
                }
                if out_of_time(&start) {
                    complete = false;
                    break;
                }
            }
            done
        }
    };

    let mut series = vec![Vec::with_capacity(run.sweeps); dim];
    if complete {
        for _ in 0..run.sweeps {
            for _ in 0..run.thin {
                state.step(run.kernel);
            }
            observable(state.config(), &mut buf);
            for (s, &x) in series.iter_mut().zip(&buf) {
                s.push(x);
            }
            if out_of_time(&start) {
                complete = false;
                break;
            }
        }
    }
    Ok(series
        .iter()
        .map(|s| ChainSummary::from_series(s, run.batches, burn_in as u64, complete))
        .collect())
}

/// Runs `run.chains` chains in parallel and merges them in chain order.
pub fn estimate_vector(
    lattice: &Lattice,
    bc: &BoundaryCondition,
    params: Params,
    dim: usize,
    observable: &VectorObservable,
    run: &RunConfig,
) -> Result<Vec<MCEstimate>> {
    run.validate()?;
    let per_chain: Vec<Vec<ChainSummary>> = (0..run.chains as u64)
        .into_par_iter()
        .map(|c| run_chain_vector(lattice, bc, params, dim, observable, run, c))
        .collect::<Result<_>>()?;
    let merged = per_chain
        .into_iter()
        .reduce(|a, b| a.iter().zip(&b).map(|(x, y)| x.merge(y)).collect())
        .expect("at least one chain");
    Ok(merged.iter().map(|s| s.estimate(run.seed, run.thin)).collect())
}

pub fn estimate_many(
    lattice: &Lattice,
    bc: &BoundaryCondition,
    params: Params,
    observables: &[&Observable],
    run: &RunConfig,
) -> Result<Vec<MCEstimate>> {
    let joint = scalar_bundle(observables);
    estimate_vector(lattice, bc, params, observables.len(), &joint, run)
}

pub fn estimate(
    lattice: &Lattice,
    bc: &BoundaryCondition,
    params: Params,
    observable: &Observable,
    run: &RunConfig,
) -> Result<MCEstimate> {
    Ok(estimate_many(lattice, bc, params, &[observable], run)?[0])
}

/// Indicator observable of an event.
pub fn indicator<'a, F>(event: F) -> impl Fn(&Configuration) -> f64 + Sync + 'a
where
    F: Fn(&Configuration) -> bool + Sync + 'a,
{
    move |c| if event(c) { 1.0 } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::self_dual_point;
    use crate::exact::Enumerator;

    fn torus(m: usize) -> Lattice {
        Lattice::square_torus(m).unwrap()
    }

    #[test]
    fn open_probability_cases() {
        for &p in &[0.1, 0.5, 0.9] {
            assert_eq!(heatbath_open_probability(p, 1.0, false), p);
            assert_eq!(heatbath_open_probability(p, 1.0, true), p);
        }
        for &q in &[1.5, 2.0, 4.0, 9.0] {
            let ps = self_dual_point(q);
            let got = heatbath_open_probability(ps, q, false);
            assert!((got - 1.0 / (1.0 + q.sqrt())).abs() < 1e-15);
        }
    }

    #[test]
    fn detailed_balance_of_both_conditional_cases() {
        // Weight ratio open/closed is p/(1−p) when the endpoints are
        // connected off e (no cluster is created) and p/((1−p)q) otherwise.
        for &(p, q) in &[(0.3, 1.0), (0.5, 2.0), (0.7, 3.5)] {
            for connected in [true, false] {
                let ratio = if connected { p / (1.0 - p) } else { p / ((1.0 - p) * q) };
                let h = heatbath_open_probability(p, q, connected);
                assert!((h / (1.0 - h) - ratio).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn connectivity_off_edge_uses_wiring() {
        let l = Lattice::square_box(3).unwrap();
        let params = Params::new(0.5, 2.0).unwrap();
        // Boundary edge between two boundary vertices: wired makes them connected.
        let e = (0..l.n_edges())
            .find(|&e| {
                let (a, b) = l.edge(e);
                l.is_boundary(a) && l.is_boundary(b)
            })
            .unwrap();
        let mut free = ChainState::new(&l, BoundaryCondition::free(), params, 1, 0).unwrap();
        assert!(!free.connected_off_edge(e));
        let mut wired = ChainState::new(&l, BoundaryCondition::wired(&l), params, 1, 0).unwrap();
        assert!(wired.connected_off_edge(e));
        // Opening only e does not connect its endpoints off e.
        let c = Configuration::from_open_edges(&l, [e]);
        let mut s = ChainState::from_config(&l, BoundaryCondition::free(), params, c, 1, 0).unwrap();
        assert!(!s.connected_off_edge(e));
        let o = Configuration::open(&l);
        let mut s = ChainState::from_config(&l, BoundaryCondition::free(), params, o, 1, 0).unwrap();
        assert!(s.connected_off_edge(e));
    }

    #[test]
    fn constant_observable() {
        let l = torus(3);
        let one = |_: &Configuration| 1.0;
        let run = RunConfig::new(Kernel::HeatBath, 2000, 5).burn_in(10);
        let est = estimate(&l, &BoundaryCondition::periodic(), Params::new(0.4, 2.0).unwrap(), &one, &run).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.n_samples, 2000);
    }

    #[test]
    fn bernoulli_marginal_at_q_one() {
        let l = torus(4);
        let obs = indicator(|c: &Configuration| c.is_open(3));
        for kernel in [Kernel::HeatBath, Kernel::Cluster] {
            let run = RunConfig::new(kernel, 20_000, 11).chains(2);
            let est = estimate(&l, &BoundaryCondition::periodic(), Params::new(0.37, 1.0).unwrap(), &obs, &run).unwrap();
            assert!(est.within(0.37, 3.0), "{kernel:?}: {est:?}");
            assert!(est.burn_in >= MIN_BURN_IN as u64);
        }
    }

    #[test]
    fn single_edge_marginal() {
        // Two-vertex path: the only edge is never connected off itself.
        let l = Lattice::square_region(crate::lattice::RectSpec::new(0, 2, 0, 2)).unwrap();
        assert_eq!(l.n_edges(), 1);
        let (p, q) = (0.6, 3.0);
        let obs = indicator(|c: &Configuration| c.is_open(0));
        let run = RunConfig::new(Kernel::HeatBath, 50_000, 3);
        let est = estimate(&l, &BoundaryCondition::free(), Params::new(p, q).unwrap(), &obs, &run).unwrap();
        assert!(est.within(p / (p + (1.0 - p) * q), 3.0), "{est:?}");
    }

    #[test]
    fn open_fraction_matches_enumeration_at_q_two() {
        let l = torus(3);
        let bc = BoundaryCondition::periodic();
        let params = Params::new(0.55, 2.0).unwrap();
        let marginals = Enumerator::new(&l, &bc, params).unwrap().edge_marginals();
        let exact = marginals.iter().sum::<f64>() / marginals.len() as f64;
        let edges = l.n_edges() as f64;
        let obs = |c: &Configuration| c.count_open() as f64 / edges;
        for kernel in [Kernel::HeatBath, Kernel::Cluster, Kernel::Mixed] {
            let run = RunConfig::new(kernel, 40_000, 21).chains(2);
            let est = estimate(&l, &bc, params, &obs, &run).unwrap();
            assert!(est.within(exact, 3.0), "{kernel:?}: {est:?} vs {exact}");
            assert!(est.converged);
        }
    }

    #[test]
    fn seed_determinism_and_thread_independence() {
        let l = torus(4);
        let bc = BoundaryCondition::periodic();
        let params = Params::new(0.6, 2.0).unwrap();
        let obs = |c: &Configuration| c.count_open() as f64;
        let run = RunConfig::new(Kernel::Mixed, 500, 99).burn_in(50).chains(4);
        let a = estimate(&l, &bc, params, &obs, &run).unwrap();
        let b = estimate(&l, &bc, params, &obs, &run).unwrap();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| estimate(&l, &bc, params, &obs, &run).unwrap());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), c.std_error.to_bits());
        assert_eq!(a, c);
        let mut s1 = ChainState::new(&l, bc.clone(), params, 7, 0).unwrap();
        let mut s2 = ChainState::new(&l, bc.clone(), params, 7, 0).unwrap();
        let mut s3 = ChainState::new(&l, bc, params, 7, 1).unwrap();
        let mut differs = false;
        for _ in 0..20 {
            s1.step(Kernel::Mixed);
            s2.step(Kernel::Mixed);
            s3.step(Kernel::Mixed);
            assert_eq!(s1.config(), s2.config());
            differs |= s1.config() != s3.config();
        }
        assert!(differs);
    }

    #[test]
    fn heatbath_is_pathwise_monotone_in_p() {
        let l = torus(5);
        let bc = BoundaryCondition::periodic();
        let ps = [0.3, 0.45, 0.5, 0.62, 0.8];
        let mut chains: Vec<_> = ps
            .iter()
            .map(|&p| ChainState::new(&l, bc.clone(), Params::new(p, 2.0).unwrap(), 4, 0).unwrap())
            .collect();
        for _ in 0..200 {
            for c in chains.iter_mut() {
                c.step(Kernel::HeatBath);
            }
            for w in chains.windows(2) {
                for e in 0..l.n_edges() {
                    assert!(!w[0].config().is_open(e) || w[1].config().is_open(e));
                }
            }
        }
    }

    #[test]
    fn coupled_estimates_are_monotone() {
        let l = torus(6);
        let bc = BoundaryCondition::periodic();
        let crossing = crate::events::Crossing::new(
            &l,
            crate::lattice::RectSpec::new(0, 4, 0, 4),
            crate::events::Direction::Horizontal,
        )
        .unwrap();
        let obs = indicator(|c: &Configuration| crossing.holds(c));
        let mut prev: Option<MCEstimate> = None;
        for &p in &[0.4, 0.5, 0.55, 0.6, 0.7] {
            let run = RunConfig::new(Kernel::HeatBath, 4000, 8).burn_in(100);
            let est = estimate(&l, &bc, Params::new(p, 2.0).unwrap(), &obs, &run).unwrap();
            if let Some(pr) = prev {
                // Pathwise coupling makes the sample means monotone exactly.
                assert!(est.mean >= pr.mean, "{p}: {} < {}", est.mean, pr.mean);
            }
            prev = Some(est);
        }
    }

    #[test]
    fn wall_time_cap_reports_incomplete() {
        let l = torus(8);
        let obs = |c: &Configuration| c.count_open() as f64;
        let run = RunConfig::new(Kernel::HeatBath, 10_000_000, 1)
            .burn_in(0)
            .wall_time(Duration::from_millis(50));
        let est = estimate(&l, &BoundaryCondition::periodic(), Params::new(0.5, 2.0).unwrap(), &obs, &run).unwrap();
        assert!(!est.complete);
        assert!(est.n_samples < 10_000_000);
    }

    #[test]
    fn invalid_runs() {
        let l = torus(3);
        let bc = BoundaryCondition::periodic();
        let obs = |_: &Configuration| 0.0;
        let run = RunConfig::new(Kernel::HeatBath, 10, 1);
        assert!(estimate(&l, &bc, Params::new(0.0, 2.0).unwrap(), &obs, &run).is_err());
        assert!(estimate(&l, &bc, Params::new(0.5, 2.0).unwrap(), &obs, &RunConfig::new(Kernel::Cluster, 0, 1)).is_err());
        assert!("swendsen".parse::<Kernel>().is_err());
    }

    #[test]
    fn potts_coupling_basics() {
        let l = torus(3);
        let bc = BoundaryCondition::periodic();
        let mut rng = chain_rng(3, 0);
        let mono = potts_from_fk(&l, &Configuration::open(&l), &bc, 3.0, &mut rng).unwrap();
        assert!(mono.iter().all(|&c| c == mono[0] && (1..=3).contains(&c)));
        assert!(potts_from_fk(&l, &Configuration::open(&l), &bc, 2.5, &mut rng).is_err());
        assert!(potts_from_fk(&l, &Configuration::open(&l), &bc, 1.0, &mut rng).is_err());
        // Empty configuration: colours are i.i.d. uniform, so agreement of two
        // sites is 1/2 at q = 2.
        let empty = Configuration::closed(&l);
        let trials = 40_000;
        let mut agree = 0;
        let mut ones = 0;
        for _ in 0..trials {
            let c = potts_from_fk(&l, &empty, &bc, 2.0, &mut rng).unwrap();
            agree += usize::from(c[0] == c[4]);
            ones += usize::from(c[0] == 1);
        }
        let sd = (0.25 / trials as f64).sqrt();
        assert!((agree as f64 / trials as f64 - 0.5).abs() < 4.0 * sd);
        assert!((ones as f64 / trials as f64 - 0.5).abs() < 4.0 * sd);
    }

    #[test]
    fn merge_is_associative_and_commutative() {
        let a = ChainSummary::from_series(&[1.0, 0.0, 1.0, 1.0], 2, 0, true);
        let b = ChainSummary::from_series(&[0.0, 0.0, 1.0, 0.0, 1.0, 1.0], 2, 5, true);
        let c = ChainSummary::from_series(&[0.5; 8], 2, 1, false);
        let left = a.merge(&b).merge(&c);
        let right = a.merge(&b.merge(&c));
        assert!((left.mean() - right.mean()).abs() < 1e-15);
        assert!((left.std_error() - right.std_error()).abs() < 1e-15);
        assert_eq!(a.merge(&b).n_samples, b.merge(&a).n_samples);
        assert!((a.merge(&b).mean() - b.merge(&a).mean()).abs() < 1e-15);
        assert!(!left.complete && left.chains == 3 && left.burn_in == 5);
    }

    #[test]
    fn autocorrelation_of_known_series() {
        let iid: Vec<f64> = {
            let mut rng = chain_rng(1, 0);
            (0..50_000).map(|_| rng.random::<f64>()).collect()
        };
        assert!((integrated_autocorrelation(&iid) - 0.5).abs() < 0.05);
        // AR(1) with coefficient r has tau = (1 + r) / (2 (1 − r)).
        let r: f64 = 0.8;
        let mut rng = chain_rng(2, 0);
        let mut x = 0.0;
        let ar: Vec<f64> = (0..200_000)
            .map(|_| {
                x = r * x + rng.random::<f64>() - 0.5;
                x
            })
            .collect();
        let expected = (1.0 + r) / (2.0 * (1.0 - r));
        assert!((integrated_autocorrelation(&ar) - expected).abs() < 0.1 * expected);
    }
}
