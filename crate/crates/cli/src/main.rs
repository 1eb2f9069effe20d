//! `rcm`: command-line driver for the random-cluster laboratory.
//!
//! Every subcommand prints one JSON document on stdout. Subcommands that
//! produce per-point estimates also write CSV rows `p,n,estimate,stderr,tau_int`
//! to `--out` when it is given. The exit code is 1 when the subcommand's
//! assertion fails, 2 on invalid input, and 0 otherwise.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rcmodel::critical::{self, PlanarLattice};
use rcmodel::events::EventSpec;
use rcmodel::experiments::{self, CsvRow, ScanSettings};
use rcmodel::sampler::{self, ChainState};
use rcmodel::{BoundaryCondition, Configuration, Enumerator, Kernel, Lattice, Params, RunConfig, Snapshot};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "rcm", version, about = "Random-cluster model laboratory")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Cluster weight q (at least 1).
    #[arg(long, global = true, default_value_t = 2.0)]
    q: f64,
    /// Edge parameter p; each subcommand documents its default.
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Linear size: box side, torus period, or rectangle side depending on the subcommand.
    #[arg(long, global = true, default_value_t = 8)]
    size: usize,
    /// Use the periodic version of the lattice.
    #[arg(long, global = true)]
    torus: bool,
    /// Boundary condition; defaults to periodic on tori and free otherwise.
    #[arg(long, global = true, value_enum)]
    bc: Option<BcArg>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Measured kernel steps per chain.
    #[arg(long, global = true, default_value_t = 10_000)]
    sweeps: usize,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Path for CSV rows (or the JSON document for subcommands without rows).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Update kernel: heatbath, cluster or mixed.
    #[arg(long, global = true, default_value = "cluster")]
    kernel: Kernel,
    /// Burn-in steps per chain; adaptive when omitted.
    #[arg(long, global = true)]
    burn_in: Option<usize>,
    #[arg(long, global = true, default_value_t = 1)]
    chains: usize,
    /// Kernel steps between recorded samples.
    #[arg(long, global = true, default_value_t = 1)]
    thin: usize,
    #[arg(long, global = true, default_value = "square")]
    lattice: PlanarLattice,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BcArg {
    Free,
    Wired,
    Periodic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact event probabilities and edge marginals by full enumeration.
    Enumerate {
        /// Event to evaluate, e.g. crossing:h:0,0,2,2 (repeatable).
        #[arg(long = "event")]
        events: Vec<String>,
    },
    /// Monte Carlo estimates of events, with an optional chain snapshot.
    Sample {
        /// Event to estimate (repeatable); the open-edge density is always reported.
        #[arg(long = "event")]
        events: Vec<String>,
        /// Write the final state of chain 0 in the FKCFG1 format.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Start the snapshot chain from a saved FKCFG1 state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Horizontal crossing of the n-square on the size-m torus at the self-dual point.
    Crossing {
        /// Square side; defaults to size/2.
        #[arg(long)]
        n: Option<usize>,
        /// Enumerate instead of sampling.
        #[arg(long)]
        exact: bool,
        /// Tolerance on |phi − 1/2| for the exact check.
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Sharp-threshold scan of the vertical crossing of [0,n)×[0,2n) on tori.
    Scan {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        sizes: Vec<usize>,
        /// Increasing p grid; defaults to p_sd ± 0.2 in steps of 0.01.
        #[arg(long, value_delimiter = ',')]
        p_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Points for the primal/dual cross-check.
        #[arg(long, value_delimiter = ',')]
        dual_points: Option<Vec<f64>>,
    },
    /// Annulus circuit events and their intersections in a wired box (p > p_sd).
    Circuits {
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value_t = 3)]
        n_max: u32,
    },
    /// Fit of log phi(0 <-> x) against |x| below the self-dual point.
    Decay {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
        distances: Vec<u32>,
    },
    /// Critical point of the square, triangular or hexagonal lattice.
    Critical,
    /// Terminal-partition laws of the triangle and its dual star.
    StarTriangle {
        /// Tolerance on the largest law difference at criticality.
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
}

/// Result of a subcommand: the JSON document, optional CSV rows, and
/// whether its assertion held.
struct Outcome {
    json: Value,
    rows: Option<Vec<CsvRow>>,
    pass: bool,
}

impl Outcome {
    fn ok(json: Value) -> Self {
        Self { json, rows: None, pass: true }
    }
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn build_lattice(g: &Global) -> AnyResult<Lattice> {
    let n = g.size;
    Ok(match (g.lattice, g.torus) {
        (PlanarLattice::Square, false) => Lattice::square_box(n)?,
        (PlanarLattice::Square, true) => Lattice::square_torus(n)?,
        (PlanarLattice::Triangular, false) => Lattice::triangular(n)?,
        (PlanarLattice::Triangular, true) => Lattice::triangular_torus(n)?,
        (PlanarLattice::Hexagonal, false) => Lattice::hexagonal(n)?,
        (PlanarLattice::Hexagonal, true) => Lattice::hexagonal_torus(n)?,
    })
}

fn build_bc(g: &Global, l: &Lattice) -> AnyResult<BoundaryCondition> {
    let bc = match g.bc {
        None => BoundaryCondition::default_for(l),
        Some(BcArg::Free) => BoundaryCondition::free(),
        Some(BcArg::Wired) => BoundaryCondition::wired(l),
        Some(BcArg::Periodic) => BoundaryCondition::periodic(),
    };
    bc.validate(l)?;
    Ok(bc)
}

fn run_config(g: &Global) -> RunConfig {
    let mut run = RunConfig::new(g.kernel, g.sweeps, g.seed).chains(g.chains).thin(g.thin);
    if let Some(b) = g.burn_in {
        run = run.burn_in(b);
    }
    run
}

fn parse_events(specs: &[String]) -> AnyResult<Vec<EventSpec>> {
    Ok(specs.iter().map(|s| s.parse()).collect::<Result<_, _>>()?)
}

fn lattice_json(l: &Lattice, bc: &BoundaryCondition) -> Value {
    json!({
        "family": l.family().name(),
        "size": l.size(),
        "vertices": l.n_vertices(),
        "edges": l.n_edges(),
        "bc": bc.kind(),
    })
}

fn self_dual_default(g: &Global) -> f64 {
    g.p.unwrap_or_else(|| critical::self_dual_point(g.q))
}

fn enumerate(g: &Global, events: &[String]) -> AnyResult<Outcome> {
    let l = build_lattice(g)?;
    let bc = build_bc(g, &l)?;
    let p = self_dual_default(g);
    let specs = parse_events(events)?;
    let compiled = specs.iter().map(|s| s.compile(&l, &bc)).collect::<Result<Vec<_>, _>>()?;
    let en = Enumerator::new(&l, &bc, Params::new(p, g.q)?)?;
    let closures: Vec<_> = compiled.iter().map(|c| move |cfg: &Configuration| c.holds(cfg)).collect();
    let names: Vec<String> = specs.iter().map(ToString::to_string).collect();
    let pairs: Vec<(&str, &rcmodel::exact::Event)> = names
        .iter()
        .zip(&closures)
        .map(|(n, c)| (n.as_str(), c as &rcmodel::exact::Event))
        .collect();
    let result = en.evaluate(&pairs);
    let rows = names
        .iter()
        .map(|n| CsvRow {
            p,
            n: g.size as u64,
            estimate: result.probabilities[n],
            stderr: 0.0,
            tau_int: 0.0,
        })
        .collect();
    Ok(Outcome {
        json: json!({
            "lattice": lattice_json(&l, &bc),
            "q": g.q,
            "p": p,
            "result": result,
        }),
        rows: Some(rows),
        pass: true,
    })
}

fn sample(g: &Global, events: &[String], snapshot: Option<&PathBuf>, resume: Option<&PathBuf>) -> AnyResult<Outcome> {
    let l = build_lattice(g)?;
    let bc = build_bc(g, &l)?;
    let p = self_dual_default(g);
    let params = Params::new(p, g.q)?;
    let specs = parse_events(events)?;
    let compiled = specs.iter().map(|s| s.compile(&l, &bc)).collect::<Result<Vec<_>, _>>()?;
    let n_edges = l.n_edges() as f64;
    let observe = |c: &Configuration, out: &mut [f64]| {
        out[0] = c.count_open() as f64 / n_edges;
        for (o, ev) in out[1..].iter_mut().zip(&compiled) {
            *o = f64::from(u8::from(ev.holds(c)));
        }
    };
    let run = run_config(g);
    let estimates = sampler::estimate_vector(&l, &bc, params, 1 + compiled.len(), &observe, &run)?;
    let mut names = vec!["open_density".to_string()];
    names.extend(specs.iter().map(ToString::to_string));
    let rows = estimates.iter().map(|e| CsvRow::new(p, g.size as u64, e)).collect();

    let mut snapshot_json = Value::Null;
    if let Some(path) = snapshot {
        let start = match resume {
            Some(r) => {
                let snap = Snapshot::read_from(File::open(r)?)?;
                snap.configuration(&l)?
            }
            None => Configuration::closed(&l),
        };
        let mut chain = ChainState::from_config(&l, bc.clone(), params, start, g.seed, 0)?;
        for _ in 0..g.burn_in.unwrap_or(0) + g.sweeps {
            chain.step(g.kernel);
        }
        chain.snapshot()?.write_to(BufWriter::new(File::create(path)?))?;
        snapshot_json = json!({
            "path": path,
            "steps": chain.sweeps(),
            "open_edges": chain.config().count_open(),
        });
    }
    let table: serde_json::Map<String, Value> = names
        .iter()
        .zip(&estimates)
        .map(|(n, e)| (n.clone(), json!(e)))
        .collect();
    Ok(Outcome {
        json: json!({
            "lattice": lattice_json(&l, &bc),
            "q": g.q,
            "p": p,
            "run": run,
            "estimates": table,
            "snapshot": snapshot_json,
        }),
        rows: Some(rows),
        pass: true,
    })
}

fn crossing(g: &Global, n: Option<usize>, exact: bool, tolerance: f64) -> AnyResult<Outcome> {
    let m = g.size;
    let n = n.unwrap_or(m / 2);
    if let Some(p) = g.p {
        let sd = critical::self_dual_point(g.q);
        if (p - sd).abs() > 1e-12 {
            return Err(format!("crossing runs at the self-dual point p = {sd}; drop --p").into());
        }
    }
    if exact {
        let r = experiments::selfdual_exact(g.q, n, m)?;
        let pass = r.deviation.abs() <= tolerance;
        let row = CsvRow {
            p: r.p,
            n: n as u64,
            estimate: r.probability,
            stderr: 0.0,
            tau_int: 0.0,
        };
        return Ok(Outcome {
            json: json!({ "report": r, "tolerance": tolerance, "pass": pass }),
            rows: Some(vec![row]),
            pass,
        });
    }
    let r = experiments::selfdual_crossing_experiment(g.q, n, m, &run_config(g))?;
    let pass = r.within_3_sigma;
    Ok(Outcome {
        rows: Some(r.csv_rows()),
        json: json!({ "report": r, "pass": pass }),
        pass,
    })
}

fn scan(
    g: &Global,
    sizes: Vec<usize>,
    p_grid: Option<Vec<f64>>,
    epsilon: f64,
    dual_points: Option<Vec<f64>>,
) -> AnyResult<Outcome> {
    let mut settings = ScanSettings::new(g.q, sizes, run_config(g));
    if let Some(grid) = p_grid {
        settings.p_grid = grid;
    }
    if let Some(points) = dual_points {
        settings.dual_check_points = points;
    }
    if let Some(p) = g.p {
        settings.p_fail = p;
    }
    settings.epsilon = epsilon;
    let r = experiments::threshold_scan(&settings)?;
    let pass = r.passes();
    Ok(Outcome {
        rows: Some(r.csv_rows()),
        json: json!({ "report": r, "pass": pass }),
        pass,
    })
}

fn circuits(g: &Global, alpha: f64, n_max: u32) -> AnyResult<Outcome> {
    let p = g.p.unwrap_or_else(|| critical::self_dual_point(g.q) + 0.1);
    let r = experiments::circuit_chain_experiment(g.q, p, alpha, n_max, &run_config(g))?;
    let pass = r.intersection_positive;
    Ok(Outcome {
        rows: Some(r.csv_rows()),
        json: json!({ "report": r, "pass": pass }),
        pass,
    })
}

fn decay(g: &Global, distances: &[u32]) -> AnyResult<Outcome> {
    let p = g.p.unwrap_or_else(|| critical::self_dual_point(g.q) - 0.1);
    let r = experiments::decay_experiment(g.q, p, distances, &run_config(g))?;
    let pass = r.negative_at_5_sigma;
    Ok(Outcome {
        rows: Some(r.csv_rows()),
        json: json!({ "report": r, "pass": pass }),
        pass,
    })
}

fn critical_point(g: &Global) -> AnyResult<Outcome> {
    let s = critical::critical(g.lattice, g.q)?;
    Ok(Outcome::ok(json!({
        "p_c": s.p_c,
        "y_c": s.y_c,
        "residual": s.residual,
    })))
}

fn star_triangle(g: &Global, tolerance: f64) -> AnyResult<Outcome> {
    // An explicit --p is exploratory; the assertion applies only at criticality.
    let (r, checked) = match g.p {
        Some(p) => (critical::star_triangle_at(g.q, p)?, false),
        None => (critical::star_triangle_check(g.q)?, true),
    };
    let pass = !checked || r.max_deviation <= tolerance;
    Ok(Outcome {
        json: json!({ "partitions": critical::PARTITIONS, "report": r, "at_critical_point": checked, "pass": pass }),
        rows: None,
        pass,
    })
}

fn run(cli: Cli) -> AnyResult<Outcome> {
    let g = &cli.global;
    match cli.command {
        Command::Enumerate { events } => enumerate(g, &events),
        Command::Sample { events, snapshot, resume } => sample(g, &events, snapshot.as_ref(), resume.as_ref()),
        Command::Crossing { n, exact, tolerance } => crossing(g, n, exact, tolerance),
        Command::Scan {
            sizes,
            p_grid,
            epsilon,
            dual_points,
        } => scan(g, sizes, p_grid, epsilon, dual_points),
        Command::Circuits { alpha, n_max } => circuits(g, alpha, n_max),
        Command::Decay { distances } => decay(g, &distances),
        Command::Critical => critical_point(g),
        Command::StarTriangle { tolerance } => star_triangle(g, tolerance),
    }
}

fn write_outputs(out: Option<&PathBuf>, outcome: &Outcome) -> AnyResult<()> {
    let text = serde_json::to_string_pretty(&outcome.json)?;
    // A closed stdout (for example `rcm ... | head`) is not an error of the run.
    if let Err(e) = writeln!(std::io::stdout().lock(), "{text}") {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            return Err(e.into());
        }
    }
    if let Some(path) = out {
        match &outcome.rows {
            Some(rows) => std::fs::write(path, experiments::csv_string(rows))?,
            None => std::fs::write(path, text + "\n")?,
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("rcm: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let out = cli.global.out.clone();
    let result = run(cli).and_then(|o| write_outputs(out.as_ref(), &o).map(|()| o.pass));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rcm: {e}");
            ExitCode::from(2)
        }
    }
}
