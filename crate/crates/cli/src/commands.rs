use std::fmt::Display;
use std::path::Path;

use num_complex::Complex64;
use qlattice_core::amplitude::{self, default_strategies, ConsistencyReport};
use qlattice_core::born::{self, overlap_window, ProjectorWindow};
use qlattice_core::composite::{composite_amplitude, CompositeSetup};
use qlattice_core::evolution::evolution_table;
use qlattice_core::lattice::{make_tight_binding_kernel, LatticeConfig};
use qlattice_core::regrade::{self, RegradeResult};
use qlattice_core::setup::FilterSpec;
use qlattice_core::{Event, Kernel, Setup, WaveFunction};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{
    AmplitudeArgs, BornArgs, BornDirectArgs, Check, Cli, Command, DoubleSlitArgs, EvolveArgs,
    Format, FuzzArgs, RegradeArgs,
};

/// Largest strategy disagreement tolerated by `amplitude` and `fuzz`.
pub const STRATEGY_TOL: f64 = 1e-10;
/// `|psi_both - psi_a - psi_b|` bound for `double-slit`.
pub const SUM_TOL: f64 = 1e-12;
/// Direct product-state sum against the binomial overlap.
pub const DIRECT_TOL: f64 = 1e-12;
/// Norm drift under a unitary kernel.
pub const NORM_DRIFT_TOL: f64 = 1e-10;
/// Additivity residual of a recovered regrade.
pub const ADDITIVITY_TOL: f64 = 1e-6;

/// Bad input: exit 1, nothing written.
#[derive(Debug)]
pub struct Failure(pub String);

impl<E: Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

#[derive(Debug)]
pub enum Status {
    Ok,
    /// Outputs written, exit 1.
    Rejected(String),
    /// Outputs written, exit 2.
    Breach(String),
}

#[derive(Debug)]
pub struct Artifact {
    pub suffix: &'static str,
    pub format: Format,
    /// Written under `--out` regardless of `--format`.
    pub always: bool,
    pub bytes: Vec<u8>,
}

#[derive(Debug)]
pub struct Run {
    pub artifacts: Vec<Artifact>,
    pub default_format: Format,
    pub summary: Value,
    pub status: Status,
}

pub fn dispatch(cli: &Cli) -> Result<Run, Failure> {
    match &cli.command {
        Command::Amplitude(a) => amplitude_cmd(a),
        Command::Fuzz(a) => fuzz_cmd(a, cli.seed),
        Command::Evolve(a) => evolve_cmd(a),
        Command::Born(a) => born_cmd(a),
        Command::BornDirect(a) => born_direct_cmd(a),
        Command::Regrade(a) => regrade_cmd(a),
        Command::DoubleSlit(a) => double_slit_cmd(a),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Failure(e.to_string()))
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// CSV and JSON renderings of the same rows.
fn table<T: Serialize>(rows: &[T]) -> Result<Vec<Artifact>, Failure> {
    Ok(vec![
        Artifact {
            suffix: "csv",
            format: Format::Csv,
            always: false,
            bytes: csv_bytes(rows)?,
        },
        Artifact {
            suffix: "json",
            format: Format::Json,
            always: false,
            bytes: json_bytes(rows)?,
        },
    ])
}

fn status_for(value: f64, tol: f64, what: &str) -> Status {
    if value <= tol {
        Status::Ok
    } else {
        Status::Breach(format!("{what} {value:e} exceeds {tol:e}"))
    }
}

#[derive(Serialize)]
struct PairRow<'a> {
    part: usize,
    first: &'a str,
    second: &'a str,
    deviation: f64,
}

fn amplitude_cmd(args: &AmplitudeArgs) -> Result<Run, Failure> {
    let composite = match (&args.composite, &args.setup, &args.kernel) {
        (Some(path), _, _) => CompositeSetup::load(path)?,
        (None, Some(s), Some(k)) => {
            let setup = Setup::from_json(&read(s)?)?;
            let kernel = Kernel::from_json(&read(k)?)?;
            CompositeSetup::new(vec![(setup, kernel)])?
        }
        _ => return Err(Failure("need --setup and --kernel, or --composite".into())),
    };
    let reports: Vec<ConsistencyReport> = composite
        .parts()
        .iter()
        .map(|(s, k)| amplitude::consistency_check(s, k, &default_strategies(s, k)))
        .collect::<Result<_, _>>()?;
    let total = composite_amplitude(&composite)?;
    let max_deviation = reports.iter().map(|r| r.max_deviation).fold(0.0, f64::max);

    let parts: Vec<Value> = composite
        .parts()
        .iter()
        .zip(&reports)
        .map(|((s, k), r)| {
            json!({
                "setup": s,
                "kernel": k.label(),
                "amplitude": r.values[0].1,
                "strategies": r.values.iter().map(|(name, a)| json!({"strategy": name, "value": a})).collect::<Vec<_>>(),
                "pairs": r.pairs,
                "max_deviation": r.max_deviation,
            })
        })
        .collect();
    let report = json!({
        "amplitude": total,
        "probability": total.norm_sqr(),
        "max_deviation": max_deviation,
        "parts": parts,
    });
    let rows: Vec<PairRow> = reports
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.pairs.iter().map(move |p| PairRow {
                part: i,
                first: &p.first,
                second: &p.second,
                deviation: p.deviation,
            })
        })
        .collect();
    Ok(Run {
        artifacts: vec![
            Artifact {
                suffix: "json",
                format: Format::Json,
                always: false,
                bytes: json_bytes(&report)?,
            },
            Artifact {
                suffix: "csv",
                format: Format::Csv,
                always: false,
                bytes: csv_bytes(&rows)?,
            },
        ],
        default_format: Format::Json,
        summary: json!({"amplitude": total, "max_deviation": max_deviation}),
        status: status_for(max_deviation, STRATEGY_TOL, "strategy deviation"),
    })
}

fn fuzz_cmd(args: &FuzzArgs, seed: u64) -> Result<Run, Failure> {
    let config = LatticeConfig::ring(args.num_sites, args.num_steps)?;
    let report = amplitude::fuzz(seed, args.count, &config)?;
    Ok(Run {
        artifacts: table(&report.rows)?,
        default_format: Format::Csv,
        summary: json!({"samples": report.samples, "max_deviation": report.max_deviation}),
        status: status_for(report.max_deviation, STRATEGY_TOL, "strategy deviation"),
    })
}

fn evolve_cmd(args: &EvolveArgs) -> Result<Run, Failure> {
    let kernel = Kernel::from_json(&read(&args.kernel)?)?;
    let psi = WaveFunction::from_json(&read(&args.psi)?, 0)?;
    let rows = evolution_table(&psi, &kernel, args.steps)?;
    let mut norms = vec![0.0; args.steps + 1];
    for r in &rows {
        norms[r.step] += r.prob;
    }
    let drift = norms
        .iter()
        .map(|n| (n - norms[0]).abs())
        .fold(0.0, f64::max);
    let status = if kernel.is_unitary() {
        status_for(drift, NORM_DRIFT_TOL, "norm drift under a unitary kernel")
    } else {
        Status::Ok
    };
    Ok(Run {
        artifacts: table(&rows)?,
        default_format: Format::Csv,
        summary: json!({"unitary": kernel.is_unitary(), "norm_drift": drift, "final_norm": norms[args.steps]}),
        status,
    })
}

fn born_cmd(args: &BornArgs) -> Result<Run, Failure> {
    let rows = born::convergence_scan(args.p, args.f, args.eps, &args.n_list)?;
    let last = rows.last().map(|r| r.overlap_exact);
    Ok(Run {
        artifacts: table(&rows)?,
        default_format: Format::Csv,
        summary: json!({"rows": rows.len(), "final_overlap": last}),
        status: Status::Ok,
    })
}

#[derive(Serialize)]
struct DirectRow {
    #[serde(rename = "N")]
    n_replicas: usize,
    site: usize,
    p: f64,
    n_min: Option<u64>,
    n_max: Option<u64>,
    overlap_direct: f64,
    overlap_exact: f64,
    deviation: f64,
}

fn born_direct_cmd(args: &BornDirectArgs) -> Result<Run, Failure> {
    let psi = WaveFunction::from_json(&read(&args.psi)?, 0)?;
    let n = args.n_replicas;
    let experiment =
        born::BornExperiment::from_wave_function(&psi, args.site, n as u64, args.f, args.eps)?;
    let window = experiment.window();
    let (direct, exact) = match window {
        Some(w) => (
            born::small_n_direct(&psi, args.site, w, n)?,
            overlap_window(experiment.p, n as u64, w),
        ),
        None => (0.0, 0.0),
    };
    let row = DirectRow {
        n_replicas: n,
        site: args.site,
        p: experiment.p,
        n_min: window.map(|w: ProjectorWindow| w.n_min),
        n_max: window.map(|w| w.n_max),
        overlap_direct: direct,
        overlap_exact: exact,
        deviation: (direct - exact).abs(),
    };
    let status = status_for(row.deviation, DIRECT_TOL, "direct against binomial overlap");
    Ok(Run {
        artifacts: table(std::slice::from_ref(&row))?,
        default_format: Format::Csv,
        summary: json!({"deviation": row.deviation}),
        status,
    })
}

#[derive(Serialize)]
struct XiRow {
    u: f64,
    xi: f64,
    xi_prime: f64,
    h: f64,
    h_factor: f64,
}

fn xi_rows(r: &RegradeResult) -> Vec<XiRow> {
    (0..r.nodes.len())
        .map(|i| XiRow {
            u: r.nodes[i],
            xi: r.xi[i],
            xi_prime: r.xi_prime[i],
            h: r.h[i],
            h_factor: r.h_factor[i],
        })
        .collect()
}

fn regrade_cmd(args: &RegradeArgs) -> Result<Run, Failure> {
    let mut sampler = regrade::catalog(&args.op, &args.coef)?;
    if let Some(d) = &args.domain {
        let [lo, hi] = d.as_slice() else {
            return Err(Failure("--domain takes exactly two values lo,hi".into()));
        };
        sampler = sampler.with_domain((*lo, *hi), (*lo, *hi))?;
    }
    if let Some(n) = args.grid {
        sampler = sampler.with_grid(n)?;
    }
    let report_artifact = |value: &Value| -> Result<Artifact, Failure> {
        Ok(Artifact {
            suffix: "json",
            format: Format::Json,
            always: true,
            bytes: json_bytes(value)?,
        })
    };

    if args.check == Check::ProductRule {
        let r = regrade::product_rule_residual(&sampler)?;
        let report = json!({"op": args.op, "coefs": args.coef, "product_rule": r});
        return Ok(Run {
            artifacts: vec![report_artifact(&report)?],
            default_format: Format::Json,
            summary: json!({"passes": r.passes, "left_dist": r.left_dist, "right_dist": r.right_dist, "assoc": r.assoc}),
            status: Status::Ok,
        });
    }

    let assoc = regrade::associativity_residual(&sampler)?;
    let result = match regrade::recover_regrade(&sampler) {
        Ok(r) => r,
        Err(e) => {
            let report = json!({
                "op": args.op,
                "coefs": args.coef,
                "assoc_residual": assoc.max_residual,
                "additivity_residual": null,
                "xi_table": [],
                "error": e.to_string(),
            });
            return Ok(Run {
                artifacts: vec![report_artifact(&report)?],
                default_format: Format::Json,
                summary: json!({"assoc_residual": assoc.max_residual, "recovered": false}),
                status: Status::Rejected(e.to_string()),
            });
        }
    };
    let additivity = result.residual_stats.map(|s| s.max);
    let rows = xi_rows(&result);
    let report = json!({
        "op": args.op,
        "coefs": args.coef,
        "assoc_residual": result.assoc_residual,
        "additivity_residual": additivity,
        "residual_stats": result.residual_stats,
        "c_measured": result.c_measured,
        "xi_table": rows,
    });
    let status = match additivity {
        Some(a) => status_for(a, ADDITIVITY_TOL, "additivity residual"),
        None => Status::Rejected("no additivity pairs inside the tabulated range".into()),
    };
    Ok(Run {
        artifacts: vec![
            report_artifact(&report)?,
            Artifact {
                suffix: "xi.csv",
                format: Format::Csv,
                always: true,
                bytes: csv_bytes(&rows)?,
            },
        ],
        default_format: Format::Json,
        summary: json!({"assoc_residual": result.assoc_residual, "additivity_residual": additivity, "recovered": true}),
        status,
    })
}

#[derive(Serialize)]
struct SlitRow {
    site: usize,
    a_re: f64,
    a_im: f64,
    b_re: f64,
    b_im: f64,
    both_re: f64,
    both_im: f64,
    prob_a: f64,
    prob_b: f64,
    prob_both: f64,
    sum_check: f64,
}

fn double_slit_cmd(args: &DoubleSlitArgs) -> Result<Run, Failure> {
    let [hole_a, hole_b] = args.holes.as_slice() else {
        return Err(Failure("--holes takes exactly two sites".into()));
    };
    if hole_a == hole_b {
        return Err(Failure("the two holes must differ".into()));
    }
    let config = LatticeConfig::ring(args.num_sites, args.steps)?.with_dt(args.dt)?;
    let kernel = match &args.kernel {
        Some(path) => Kernel::from_json(&read(path)?)?,
        None => make_tight_binding_kernel(
            &config,
            Complex64::new(args.hop, 0.0),
            &vec![0.0; args.num_sites],
        )?,
    };
    let source = Event::new(args.source.unwrap_or(args.num_sites / 2), 0);
    let slit_time = args.slit_time.unwrap_or(args.steps / 2);
    let screens = [
        FilterSpec::single(slit_time, *hole_a),
        FilterSpec::single(slit_time, *hole_b),
        FilterSpec::new(slit_time, [*hole_a, *hole_b])?,
    ];
    let mut rows = Vec::with_capacity(args.num_sites);
    for site in 0..kernel.num_sites() {
        let detector = Event::new(site, args.steps);
        let [a, b, both] = screens.clone().map(|f| -> Result<Complex64, Failure> {
            let s = Setup::new(source, detector, vec![f])?;
            Ok(amplitude::amplitude(&s, &kernel)?.value)
        });
        let (a, b, both) = (a?, b?, both?);
        rows.push(SlitRow {
            site,
            a_re: a.re,
            a_im: a.im,
            b_re: b.re,
            b_im: b.im,
            both_re: both.re,
            both_im: both.im,
            prob_a: a.norm_sqr(),
            prob_b: b.norm_sqr(),
            prob_both: both.norm_sqr(),
            sum_check: (both - a - b).norm(),
        });
    }
    let worst = rows.iter().map(|r| r.sum_check).fold(0.0, f64::max);
    Ok(Run {
        artifacts: table(&rows)?,
        default_format: Format::Csv,
        summary: json!({"max_sum_check": worst}),
        status: status_for(worst, SUM_TOL, "sum check"),
    })
}
