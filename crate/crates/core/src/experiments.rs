//! Scripted Monte Carlo and enumeration experiments.
//!
//! Every report serialises its full parameter set (including the run seed)
//! and can be flattened into CSV rows `p,n,estimate,stderr,tau_int`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configuration::{BoundaryCondition, Configuration};
use crate::critical::{dual_parameter, self_dual_point};
use crate::error::{invalid, Result};
use crate::events::{AnnulusEvent, AnnulusSpec, Crossing, Direction, DualCrossing};
use crate::exact::{Enumerator, Params};
use crate::lattice::{Lattice, RectSpec};
use crate::sampler::{estimate, estimate_vector, indicator, MCEstimate, RunConfig};

/// One CSV row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub p: f64,
    pub n: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub tau_int: f64,
}

impl CsvRow {
    pub fn new(p: f64, n: u64, e: &MCEstimate) -> Self {
        Self {
            p,
            n,
            estimate: e.mean,
            stderr: e.std_error,
            tau_int: e.tau_int,
        }
    }
}

pub const CSV_HEADER: &str = "p,n,estimate,stderr,tau_int";

/// Renders rows with shortest round-trip float formatting, so equal values
/// always produce equal bytes.
pub fn csv_string(rows: &[CsvRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.p, r.n, r.estimate, r.stderr, r.tau_int).expect("writing to a string");
    }
    out
}

fn torus_crossing(m: usize, rect: RectSpec, direction: Direction) -> Result<(Lattice, Crossing)> {
    let l = Lattice::square_torus(m)?;
    let c = Crossing::new(&l, rect, direction)?;
    Ok((l, c))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfDualReport {
    pub q: f64,
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub run: RunConfig,
    pub estimate: MCEstimate,
    pub target: f64,
    /// `(mean − 1/2) / std_error`.
    pub z_score: f64,
    pub within_3_sigma: bool,
}

impl SelfDualReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        vec![CsvRow::new(self.p, self.n as u64, &self.estimate)]
    }
}

fn z_score(e: &MCEstimate, target: f64) -> f64 {
    if e.std_error > 0.0 {
        (e.mean - target) / e.std_error
    } else if e.mean == target {
        0.0
    } else {
        f64::INFINITY.copysign(e.mean - target)
    }
}

/// Horizontal crossing of `[0,n)²` on the periodic `m`-torus at `p_sd(q)`.
pub fn selfdual_crossing_experiment(q: f64, n: usize, m: usize, run: &RunConfig) -> Result<SelfDualReport> {
    if m <= n || n == 0 {
        return invalid(format!("need m > n ≥ 1, got n = {n}, m = {m}"));
    }
    let p = self_dual_point(q);
    let rect = RectSpec::new(0, n as i64, 0, n as i64);
    let (l, crossing) = torus_crossing(m, rect, Direction::Horizontal)?;
    let obs = indicator(|c: &Configuration| crossing.holds(c));
    let est = estimate(&l, &BoundaryCondition::periodic(), Params::new(p, q)?, &obs, run)?;
    let z = z_score(&est, 0.5);
    Ok(SelfDualReport {
        q,
        n,
        m,
        p,
        run: run.clone(),
        estimate: est,
        target: 0.5,
        z_score: z,
        within_3_sigma: z.abs() <= 3.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSelfDual {
    pub q: f64,
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub probability: f64,
    pub deviation: f64,
}

/// Enumerated version of [`selfdual_crossing_experiment`].
pub fn selfdual_exact(q: f64, n: usize, m: usize) -> Result<ExactSelfDual> {
    if m <= n || n == 0 {
        return invalid(format!("need m > n ≥ 1, got n = {n}, m = {m}"));
    }
    let p = self_dual_point(q);
    let rect = RectSpec::new(0, n as i64, 0, n as i64);
    let (l, crossing) = torus_crossing(m, rect, Direction::Horizontal)?;
    let bc = BoundaryCondition::periodic();
    let probability = Enumerator::new(&l, &bc, Params::new(p, q)?)?.probability(&|c| crossing.holds(c));
    Ok(ExactSelfDual {
        q,
        n,
        m,
        p,
        probability,
        deviation: probability - 0.5,
    })
}

/// `c(α) = [32(1+q²)]^(−⌊2α⌋)`.
pub fn rsw_constant(q: f64, alpha: f64) -> f64 {
    (32.0 * (1.0 + q * q)).powi(-((2.0 * alpha).floor() as i32))
}

/// Lower bound `1/(16(1+q²))` for vertical crossings of `[0,n)×[0,3n/2)`.
pub fn box_crossing_bound(q: f64) -> f64 {
    1.0 / (16.0 * (1.0 + q * q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RswReport {
    pub q: f64,
    pub alpha: f64,
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub run: RunConfig,
    /// Horizontal crossing of `[0,⌊αn⌋)×[0,n)`.
    pub long_crossing: MCEstimate,
    pub c_alpha: f64,
    pub long_clears_bound: bool,
    /// Vertical crossing of `[0,n)×[0,⌊3n/2⌋)`.
    pub box_crossing: MCEstimate,
    pub box_bound: f64,
    /// Estimate minus three standard errors is at least the bound.
    pub box_clears_bound: bool,
}

impl RswReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        vec![
            CsvRow::new(self.p, self.n as u64, &self.long_crossing),
            CsvRow::new(self.p, self.n as u64, &self.box_crossing),
        ]
    }
}

pub fn rsw_experiment(q: f64, alpha: f64, n: usize, m: usize, run: &RunConfig) -> Result<RswReport> {
    if alpha.is_nan() || alpha < 1.0 || n == 0 {
        return invalid(format!("need alpha ≥ 1 and n ≥ 1, got alpha = {alpha}, n = {n}"));
    }
    let width = (alpha * n as f64).floor() as i64;
    let tall = (3 * n / 2) as i64;
    if m as i64 <= width || m as i64 <= tall {
        return invalid(format!("torus size m = {m} must exceed alpha·n and 3n/2"));
    }
    let p = self_dual_point(q);
    let l = Lattice::square_torus(m)?;
    let long = Crossing::new(&l, RectSpec::new(0, width, 0, n as i64), Direction::Horizontal)?;
    let boxed = Crossing::new(&l, RectSpec::new(0, n as i64, 0, tall), Direction::Vertical)?;
    let obs = |c: &Configuration, out: &mut [f64]| {
        out[0] = f64::from(u8::from(long.holds(c)));
        out[1] = f64::from(u8::from(boxed.holds(c)));
    };
    let est = estimate_vector(&l, &BoundaryCondition::periodic(), Params::new(p, q)?, 2, &obs, run)?;
    let c_alpha = rsw_constant(q, alpha);
    let box_bound = box_crossing_bound(q);
    Ok(RswReport {
        q,
        alpha,
        n,
        m,
        p,
        run: run.clone(),
        long_crossing: est[0],
        c_alpha,
        long_clears_bound: est[0].mean - 3.0 * est[0].std_error >= c_alpha,
        box_crossing: est[1],
        box_bound,
        box_clears_bound: est[1].mean - 3.0 * est[1].std_error >= box_bound,
    })
}

/// Settings of a sharp-threshold scan. For each size `n` the event is the
/// vertical crossing of `[0,n)×[0,2n)` on the torus of size `torus_factor·n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub q: f64,
    pub sizes: Vec<usize>,
    pub p_grid: Vec<f64>,
    pub epsilon: f64,
    pub torus_factor: usize,
    /// Parameter at which failure probabilities are compared across sizes.
    pub p_fail: f64,
    /// Grid points at which the duality cross-check runs.
    pub dual_check_points: Vec<f64>,
    pub run: RunConfig,
}

impl ScanSettings {
    /// Grid `0.30, 0.31, …, 0.70` around `p_sd(q)`, ε = 0.05 and the failure
    /// comparison at `p_sd + 0.1`.
    pub fn new(q: f64, sizes: Vec<usize>, run: RunConfig) -> Self {
        let ps = self_dual_point(q);
        let p_grid = (0..=40)
            .map(|i| ((ps - 0.2 + 0.01 * i as f64) * 1e9).round() / 1e9)
            .filter(|p| *p > 0.0 && *p < 1.0)
            .collect();
        Self {
            q,
            sizes,
            p_grid,
            epsilon: 0.05,
            torus_factor: 4,
            p_fail: ps + 0.1,
            dual_check_points: vec![ps - 0.05, ps, ps + 0.05],
            run,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCheck {
    pub p: f64,
    pub p_star: f64,
    pub primal: MCEstimate,
    /// Dual horizontal crossing of the transposed rectangle, sampled at `p*`.
    pub dual: MCEstimate,
    pub z_score: f64,
    pub agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub n: usize,
    pub m: usize,
    pub rect: RectSpec,
    pub p_grid: Vec<f64>,
    pub estimates: Vec<MCEstimate>,
    /// `[p_lo, p_hi]`: interpolated first passages through ε and 1−ε.
    pub window: [f64; 2],
    pub window_width: f64,
    /// Both passages happen strictly inside the grid.
    pub window_resolved: bool,
    /// No decrease larger than three combined standard errors.
    pub monotone: bool,
    pub at_self_dual: Option<MCEstimate>,
    pub dual_checks: Vec<DualCheck>,
}

/// First grid passage of `level`, linearly interpolated. The flag is false
/// when the grid starts above `level` or never reaches it.
pub fn first_passage(p: &[f64], y: &[f64], level: f64) -> (f64, bool) {
    match y.iter().position(|&v| v >= level) {
        None => (*p.last().expect("non-empty grid"), false),
        Some(0) => (p[0], false),
        Some(i) => {
            let t = (level - y[i - 1]) / (y[i] - y[i - 1]);
            (p[i - 1] + t * (p[i] - p[i - 1]), true)
        }
    }
}

/// Ordinary least squares of `y` on `x`: `(slope, slope standard error)`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let se = if x.len() > 2 { (resid / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, se)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub settings: ScanSettings,
    pub results: Vec<ScanResult>,
    pub widths_strictly_decreasing: bool,
    pub p_fail: f64,
    /// `(n, 1 − φ, std_error)` at `p_fail`.
    pub failure: Vec<(usize, f64, f64)>,
    pub failure_decreasing: bool,
    /// Least-squares slope of `log(1−φ)` against `log n`.
    pub failure_loglog_slope: f64,
    pub all_monotone: bool,
    pub dual_checks_agree: bool,
}

impl ThresholdReport {
    pub fn passes(&self) -> bool {
        self.widths_strictly_decreasing && self.failure_decreasing && self.failure_loglog_slope < 0.0
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.results
            .iter()
            .flat_map(|r| r.p_grid.iter().zip(&r.estimates).map(|(&p, e)| CsvRow::new(p, r.n as u64, e)))
            .collect()
    }
}

fn scan_size(s: &ScanSettings, n: usize) -> Result<(ScanResult, MCEstimate)> {
    if n == 0 {
        return invalid("scan sizes must be positive");
    }
    let m = s.torus_factor * n;
    let rect = RectSpec::new(0, n as i64, 0, 2 * n as i64);
    let (l, crossing) = torus_crossing(m, rect, Direction::Vertical)?;
    let bc = BoundaryCondition::periodic();
    let obs = indicator(|c: &Configuration| crossing.holds(c));
    let run_at = |p: f64| -> Result<MCEstimate> { estimate(&l, &bc, Params::new(p, s.q)?, &obs, &s.run) };
    let estimates: Vec<MCEstimate> = s.p_grid.par_iter().map(|&p| run_at(p)).collect::<Result<_>>()?;
    let means: Vec<f64> = estimates.iter().map(|e| e.mean).collect();
    let (p_lo, lo_ok) = first_passage(&s.p_grid, &means, s.epsilon);
    let (p_hi, hi_ok) = first_passage(&s.p_grid, &means, 1.0 - s.epsilon);
    let monotone = estimates.windows(2).all(|w| {
        let tol = 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].mean >= w[0].mean - tol
    });
    let ps = self_dual_point(s.q);
    let at_self_dual = s
        .p_grid
        .iter()
        .position(|p| (p - ps).abs() < 1e-9)
        .map(|i| estimates[i]);

    let dual = DualCrossing::new(&l, rect.transpose(), Direction::Horizontal)?;
    let dual_obs = indicator(|c: &Configuration| dual.holds(c));
    let dual_checks = s
        .dual_check_points
        .par_iter()
        .map(|&p| -> Result<DualCheck> {
            let primal = run_at(p)?;
            let p_star = dual_parameter(p, s.q);
            let d = estimate(&l, &bc, Params::new(p_star, s.q)?, &dual_obs, &s.run)?;
            let se = (primal.std_error.powi(2) + d.std_error.powi(2)).sqrt();
            let z = if se > 0.0 { (primal.mean - d.mean) / se } else { 0.0 };
            Ok(DualCheck {
                p,
                p_star,
                primal,
                dual: d,
                z_score: z,
                agree: z.abs() <= 3.0,
            })
        })
        .collect::<Result<_>>()?;
    let failure = match s.p_grid.iter().position(|p| (p - s.p_fail).abs() < 1e-9) {
        Some(i) => estimates[i],
        None => run_at(s.p_fail)?,
    };
    Ok((
        ScanResult {
            n,
            m,
            rect,
            p_grid: s.p_grid.clone(),
            estimates,
            window: [p_lo, p_hi],
            window_width: p_hi - p_lo,
            window_resolved: lo_ok && hi_ok,
            monotone,
            at_self_dual,
            dual_checks,
        },
        failure,
    ))
}

pub fn threshold_scan(settings: &ScanSettings) -> Result<ThresholdReport> {
    if settings.p_grid.len() < 2 || settings.sizes.is_empty() {
        return invalid("a scan needs at least two grid points and one size");
    }
    if !settings.p_grid.windows(2).all(|w| w[0] < w[1]) {
        return invalid("the p grid must be strictly increasing");
    }
    let ps = self_dual_point(settings.q);
    if !(settings.p_grid[0] < ps && ps < *settings.p_grid.last().unwrap()) {
        return invalid("the p grid must straddle the self-dual point");
    }
    let mut results = Vec::new();
    let mut failure = Vec::new();
    for &n in &settings.sizes {
        let (r, f) = scan_size(settings, n)?;
        failure.push((n, 1.0 - f.mean, f.std_error));
        results.push(r);
    }
    let widths_strictly_decreasing = results.windows(2).all(|w| w[1].window_width < w[0].window_width);
    let failure_decreasing = failure.windows(2).all(|w| w[1].1 < w[0].1);
    let failure_loglog_slope = if failure.len() >= 2 && failure.iter().all(|f| f.1 > 0.0) {
        let x: Vec<f64> = failure.iter().map(|f| (f.0 as f64).ln()).collect();
        let y: Vec<f64> = failure.iter().map(|f| f.1.ln()).collect();
        ols_slope(&x, &y).0
    } else {
        f64::NAN
    };
    Ok(ThresholdReport {
        settings: settings.clone(),
        all_monotone: results.iter().all(|r| r.monotone),
        dual_checks_agree: results.iter().all(|r| r.dual_checks.iter().all(|d| d.agree)),
        results,
        widths_strictly_decreasing,
        p_fail: settings.p_fail,
        failure,
        failure_decreasing,
        failure_loglog_slope,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitReport {
    pub q: f64,
    pub p: f64,
    pub alpha: f64,
    pub n_max: u32,
    /// Radius of the wired box `[−R,R]²` holding every annulus.
    pub box_radius: i64,
    pub run: RunConfig,
    /// `φ(A_n)` for `n = 1..=n_max`.
    pub per_n: Vec<MCEstimate>,
    /// Frequency of `A_1 ∩ … ∩ A_n`.
    pub intersection: Vec<MCEstimate>,
    pub increasing: bool,
    pub intersection_positive: bool,
}

impl CircuitReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.per_n
            .iter()
            .chain(&self.intersection)
            .enumerate()
            .map(|(i, e)| CsvRow::new(self.p, (i % self.per_n.len()) as u64 + 1, e))
            .collect()
    }
}

/// Annulus circuit events `A_n` (radii `α^n, α^(n+1), α^(n+2)`) for
/// `n = 1..=n_max` in one wired box of radius `α^(n_max+2)`.
pub fn circuit_chain_experiment(q: f64, p: f64, alpha: f64, n_max: u32, run: &RunConfig) -> Result<CircuitReport> {
    if n_max == 0 {
        return invalid("n_max must be at least 1");
    }
    if p <= self_dual_point(q) {
        return invalid(format!("circuit chains need p > p_sd(q) = {}", self_dual_point(q)));
    }
    let specs: Vec<AnnulusSpec> = (1..=n_max).map(|n| AnnulusSpec::new(alpha, n)).collect::<Result<_>>()?;
    let r = specs.last().expect("n_max ≥ 1").r_box();
    let l = Lattice::square_region(RectSpec::closed(-r, r, -r, r))?;
    let bc = BoundaryCondition::wired(&l);
    let events: Vec<AnnulusEvent> = specs.iter().map(|&s| AnnulusEvent::new(&l, s)).collect::<Result<_>>()?;
    let k = events.len();
    let obs = |c: &Configuration, out: &mut [f64]| {
        let mut all = true;
        for (i, ev) in events.iter().enumerate() {
            let h = ev.holds(&l, c);
            all &= h;
            out[i] = f64::from(u8::from(h));
            out[k + i] = f64::from(u8::from(all));
        }
    };
    let est = estimate_vector(&l, &bc, Params::new(p, q)?, 2 * k, &obs, run)?;
    let per_n = est[..k].to_vec();
    let intersection = est[k..].to_vec();
    let last = intersection[k - 1];
    Ok(CircuitReport {
        q,
        p,
        alpha,
        n_max,
        box_radius: r,
        run: run.clone(),
        increasing: per_n.windows(2).all(|w| w[1].mean > w[0].mean),
        intersection_positive: last.mean - 3.0 * last.std_error > 0.0,
        per_n,
        intersection,
    })
}

/// Weighted least squares line `y = a + b x` with weights `1/σ²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub intercept_se: f64,
    /// χ² per degree of freedom.
    pub reduced_chi2: f64,
}

pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<LineFit> {
    if x.len() < 3 || x.len() != y.len() || x.len() != sigma.len() {
        return invalid("weighted fit needs at least three points with matching lengths");
    }
    if sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return invalid("weighted fit needs positive finite errors");
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&xi, &yi), &si) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (si * si);
        s += w;
        sx += w * xi;
        sy += w * yi;
        sxx += w * xi * xi;
        sxy += w * xi * yi;
    }
    let det = s * sxx - sx * sx;
    if det <= 0.0 {
        return invalid("weighted fit is degenerate (all x equal)");
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2: f64 = x
        .iter()
        .zip(y)
        .zip(sigma)
        .map(|((&xi, &yi), &si)| ((yi - intercept - slope * xi) / si).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        slope_se: (s / det).sqrt(),
        intercept,
        intercept_se: (sxx / det).sqrt(),
        reduced_chi2: chi2 / (x.len() - 2) as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub q: f64,
    pub p: f64,
    /// Half-side of the free box `[−R,R]²` in plane units.
    pub box_radius: i64,
    pub run: RunConfig,
    /// All requested distances with their estimates of `φ(0 ↔ x)`.
    pub requested: Vec<u32>,
    pub estimates: Vec<MCEstimate>,
    /// Distances kept in the fit with `log φ` and its delta-method error.
    pub distances: Vec<u32>,
    pub log_probabilities: Vec<f64>,
    pub log_errors: Vec<f64>,
    /// Distances whose estimate is within two standard errors of zero.
    pub dropped: Vec<u32>,
    pub fit: Option<LineFit>,
    /// `−slope / slope_se`.
    pub significance: f64,
    pub negative_at_5_sigma: bool,
}

impl DecayFit {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.requested
            .iter()
            .zip(&self.estimates)
            .map(|(&d, e)| CsvRow::new(self.p, d as u64, e))
            .collect()
    }
}

/// Estimates `φ(0 ↔ x)` for `x` at Euclidean distance `d` along a lattice
/// axis, in a free box whose side is at least four times the largest
/// distance, then fits `log φ` linearly in `d`.
pub fn decay_experiment(q: f64, p: f64, distances: &[u32], run: &RunConfig) -> Result<DecayFit> {
    let d_max = match distances.iter().max() {
        Some(&d) if d > 0 && distances.iter().all(|&d| d > 0) => d,
        _ => return invalid("distances must be non-empty and positive"),
    };
    if !(0.0..self_dual_point(q)).contains(&p) {
        return invalid(format!("decay needs 0 ≤ p < p_sd(q) = {}", self_dual_point(q)));
    }
    // Side 2R/√2 in Euclidean units must be at least 4·d_max.
    let r = (2.0 * std::f64::consts::SQRT_2 * d_max as f64).ceil() as i64;
    let l = Lattice::square_region(RectSpec::closed(-r, r, -r, r))?;
    let origin = l.vertex_at((0, 0)).expect("origin is a site");
    let targets: Vec<usize> = distances
        .iter()
        .map(|&d| l.vertex_at((d as i64, d as i64)).expect("target inside the box"))
        .collect();
    let estimates = if p == 0.0 {
        let zero = MCEstimate {
            mean: 0.0,
            std_error: 0.0,
            n_samples: 1,
            tau_int: 0.5,
            effective_samples: 1.0,
            seed: run.seed,
            n_chains: 1,
            burn_in: 0,
            converged: true,
            complete: true,
        };
        vec![zero; distances.len()]
    } else {
        let n = l.n_vertices();
        let lat = &l;
        let obs = move |c: &Configuration, out: &mut [f64]| {
            let mut seen = vec![false; n];
            let mut stack = vec![origin];
            seen[origin] = true;
            while let Some(v) = stack.pop() {
                for (w, e) in lat.neighbors(v) {
                    if !seen[w] && c.is_open(e) {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            for (o, &t) in out.iter_mut().zip(&targets) {
                *o = f64::from(u8::from(seen[t]));
            }
        };
        estimate_vector(&l, &BoundaryCondition::free(), Params::new(p, q)?, distances.len(), &obs, run)?
    };
    let mut kept = Vec::new();
    let mut logs = Vec::new();
    let mut errs = Vec::new();
    let mut dropped = Vec::new();
    for (&d, e) in distances.iter().zip(&estimates) {
        if e.mean <= 2.0 * e.std_error || e.mean <= 0.0 {
            dropped.push(d);
        } else {
            kept.push(d);
            logs.push(e.mean.ln());
            errs.push(e.std_error / e.mean);
        }
    }
    let fit = if kept.len() >= 4 {
        let x: Vec<f64> = kept.iter().map(|&d| d as f64).collect();
        Some(weighted_line_fit(&x, &logs, &errs)?)
    } else {
        None
    };
    let significance = fit.map_or(f64::NAN, |f| -f.slope / f.slope_se);
    Ok(DecayFit {
        q,
        p,
        box_radius: r,
        run: run.clone(),
        requested: distances.to_vec(),
        estimates,
        distances: kept,
        log_probabilities: logs,
        log_errors: errs,
        dropped,
        fit,
        significance,
        negative_at_5_sigma: significance >= 5.0,
    })
}
