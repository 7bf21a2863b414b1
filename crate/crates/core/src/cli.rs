//! Command-line front end. Every command prints one JSON document (or a CSV
//! table) built with fixed-width float formatting, so identical invocations
//! produce byte-identical output.
//!
//! Exit codes: 0 on success, 1 on errors, 2 when the computation ran but the
//! sought object was not found or a structural hypothesis failed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{RefinementPolicy, Vec2};
use crate::linking::{linking_asymptotic, linking_finite};
use crate::measures::{atom_torsions, empirical_measure, torus_null_torsion_search};
use crate::systems::{register_builtins, IsotopySystem, SystemSpec};
use crate::theorems::{
    locate_torsion_point, snapshot_angle_sum, snapshot_equivalence_gap, twist_bound_sweep,
    SegmentScan,
};
use crate::torsion::{torsion_asymptotic, torsion_finite, w_grid};

#[derive(Parser)]
#[command(
    name = "torlink",
    version,
    about = "Finite-time torsion and linking numbers for surface isotopies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Torsion of a tangent vector at one horizon, or the horizon series.
    #[command(group(ArgGroup::new("horizon").required(true).args(["n", "n_max"])))]
    Torsion {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Base point as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        point: Vec2,
        /// Tangent seed as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        vector: Vec2,
        /// Single horizon
        #[arg(long)]
        n: Option<u32>,
        /// Evaluate every horizon up to this one
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Linking of an ordered pair at one horizon, or the horizon series.
    #[command(group(ArgGroup::new("horizon").required(true).args(["n", "n_max"])))]
    Linking {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// First point as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        x: Vec2,
        /// Second point as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        y: Vec2,
        /// Single horizon
        #[arg(long)]
        n: Option<u32>,
        /// Evaluate every horizon up to this one
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Find a segment point whose torsion equals the endpoint linking.
    Locate {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// First endpoint as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        x: Vec2,
        /// Second endpoint as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        y: Vec2,
        #[arg(long)]
        n: u32,
        /// Scan intervals along the segment
        #[arg(long, default_value_t = 64)]
        scan: u32,
        /// Match tolerance on |torsion - linking|
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Check the (-pi, 0) torsion band of a positive twist family.
    TwistSweep {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Number of seeded sample points
        #[arg(long, default_value_t = 9)]
        points: u32,
        /// Comma-separated horizons
        #[arg(long, default_value = "1,2,5,20")]
        horizons: String,
    },
    /// Snapshot angle sum of a twist map against the scaled torsion.
    Crovisier {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Base point as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        point: Vec2,
        /// Tangent seed as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        vector: Vec2,
        #[arg(long)]
        n: u32,
        /// Equivalence-gap tolerance gating the exit code
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Orbit-average measure of a tangent seed and its torsion integral.
    Measure {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Base point as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        point: Vec2,
        /// Tangent seed as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        vector: Vec2,
        #[arg(long)]
        n: u32,
    },
    /// Search a torus lift for a point with null torsion.
    TorusNull {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, default_value_t = 3)]
        n: u32,
        /// Scan intervals along the period segment
        #[arg(long, default_value_t = 64)]
        scan: u32,
        /// Match tolerance on |torsion - linking|
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// The two-parameter winding family W(s, t) and its structure report.
    Wgrid {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Base point as "X,Y"
        #[arg(long, value_parser = parse_vec2)]
        point: Vec2,
        /// Comma-separated times
        #[arg(long, default_value = "0,0.25,0.5,1")]
        times: String,
        /// Number of direction intervals over a full turn (even, >= 8)
        #[arg(long, default_value_t = 64)]
        s_count: u32,
        /// Structure-report tolerance gating the exit code
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Args)]
struct SystemArgs {
    /// Built-in system name
    #[arg(long)]
    system: Option<String>,
    /// Parameter override as KEY=VALUE (repeatable)
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Isotopy variant of the system
    #[arg(long)]
    isotopy: Option<String>,
    /// JSON file with {"name": ..., "params": {...}, "variant": ...}
    #[arg(long, conflicts_with_all = ["system", "params", "isotopy"])]
    config: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    /// Write here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Seed grid density of the angle lift
    #[arg(long, default_value_t = 64)]
    steps_per_unit: u32,
    /// Seed for sampled points
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

impl OutputArgs {
    fn policy(&self) -> RefinementPolicy {
        RefinementPolicy {
            steps_per_unit: self.steps_per_unit.max(1),
            ..RefinementPolicy::default()
        }
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                0
            } else {
                1
            };
        }
    };
    let hypothesis_gated = matches!(
        cli.command,
        Command::TwistSweep { .. } | Command::Crovisier { .. }
    );
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NotATwistFamily { .. } if hypothesis_gated => 2,
                _ => 1,
            }
        }
    }
}

fn parse_vec2(s: &str) -> std::result::Result<Vec2, String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected \"X,Y\", got \"{s}\""))?;
    let x: f64 = a.trim().parse().map_err(|_| format!("bad number \"{a}\""))?;
    let y: f64 = b.trim().parse().map_err(|_| format!("bad number \"{b}\""))?;
    Ok(Vec2::new(x, y))
}

fn parse_u32_list(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|tok| {
            tok.trim().parse::<u32>().map_err(|_| Error::InvalidParameter {
                message: format!("bad horizon \"{tok}\""),
            })
        })
        .collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| Error::InvalidParameter {
                message: format!("bad number \"{tok}\""),
            })
        })
        .collect()
}

fn build_system(args: &SystemArgs) -> Result<IsotopySystem> {
    let spec = if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidParameter {
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        serde_json::from_str::<SystemSpec>(&text).map_err(|e| Error::InvalidParameter {
            message: format!("bad config {}: {e}", path.display()),
        })?
    } else {
        let name = args.system.as_deref().ok_or(Error::InvalidParameter {
            message: "pass --system NAME or --config FILE".into(),
        })?;
        let mut spec = SystemSpec::new(name);
        for kv in &args.params {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::InvalidParameter {
                message: format!("expected KEY=VALUE, got \"{kv}\""),
            })?;
            let value: f64 = v.trim().parse().map_err(|_| Error::InvalidParameter {
                message: format!("bad value for parameter \"{k}\""),
            })?;
            spec = spec.with_param(k.trim(), value);
        }
        if let Some(variant) = &args.isotopy {
            spec = spec.with_variant(variant);
        }
        spec
    };
    register_builtins().build(&spec)
}

fn configure_jobs(output: &OutputArgs) {
    if let Some(jobs) = output.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
}

// ---------------------------------------------------------------------------
// Deterministic serialization

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value.serialize(&mut ser).map_err(|e| Error::InvalidParameter {
        message: format!("serialization failed: {e}"),
    })?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::InvalidParameter {
        message: format!("serialization produced invalid utf-8: {e}"),
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    system: SystemDescriptor<'a>,
    result: T,
}

#[derive(Serialize)]
struct SystemDescriptor<'a> {
    name: &'a str,
    variant: &'a str,
    params: &'a BTreeMap<String, f64>,
}

fn describe(sys: &IsotopySystem) -> SystemDescriptor<'_> {
    SystemDescriptor {
        name: sys.name(),
        variant: sys.variant(),
        params: sys.params(),
    }
}

fn emit(output: &OutputArgs, body: String) -> Result<()> {
    match &output.out {
        Some(path) => std::fs::write(path, body).map_err(|e| Error::InvalidParameter {
            message: format!("cannot write {}: {e}", path.display()),
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::InvalidParameter {
                    message: format!("cannot write to stdout: {e}"),
                })
        }
    }
}

// ---------------------------------------------------------------------------
// Command bodies

#[derive(Serialize)]
struct ScalarOut {
    value: f64,
    horizon: u32,
    total_winding: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_separation: Option<f64>,
}

#[derive(Serialize)]
struct SeriesEntry {
    n: u32,
    value: f64,
}

#[derive(Serialize)]
struct SeriesOut {
    final_value: f64,
    cauchy_diagnostic: f64,
    values: Vec<SeriesEntry>,
}

#[derive(Serialize)]
struct LocateSample {
    s: f64,
    torsion: f64,
    gap: f64,
}

#[derive(Serialize)]
struct LocateOut {
    horizon: u32,
    target_linking: f64,
    located_s: Option<f64>,
    located_point: Option<[f64; 2]>,
    residual: f64,
    samples: Vec<LocateSample>,
}

impl LocateOut {
    fn from_scan(scan: &SegmentScan) -> LocateOut {
        LocateOut {
            horizon: scan.horizon,
            target_linking: scan.target_linking,
            located_s: scan.located_s,
            located_point: scan.located_point.map(|p| [p.x, p.y]),
            residual: scan.residual,
            samples: scan
                .samples
                .iter()
                .map(|s| LocateSample {
                    s: s.s,
                    torsion: s.torsion,
                    gap: s.gap,
                })
                .collect(),
        }
    }
}

fn scan_csv(scan: &SegmentScan) -> String {
    let mut out = String::from("s,torsion,linking,residual\n");
    for s in &scan.samples {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f(s.s),
            fmt_f(s.torsion),
            fmt_f(scan.target_linking),
            fmt_f(s.gap.abs()),
        ));
    }
    out
}

fn series_csv(series: &crate::torsion::AveragedSeries) -> String {
    let mut out = String::from("n,value\n");
    for &(n, v) in &series.values {
        out.push_str(&format!("{n},{}\n", fmt_f(v)));
    }
    out
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Torsion {
            sys,
            output,
            point,
            vector,
            n,
            n_max,
        } => {
            configure_jobs(&output);
            let system = build_system(&sys)?;
            let policy = output.policy();
            let body = match (n, n_max, output.format) {
                (Some(n), _, Format::Json) => {
                    let r = torsion_finite(&system, point, vector, n, Vec2::new(1.0, 0.0), &policy)?;
                    to_json(&Envelope {
                        command: "torsion",
                        system: describe(&system),
                        result: ScalarOut {
                            value: r.value,
                            horizon: r.horizon,
                            total_winding: r.total_winding,
                            min_separation: None,
                        },
                    })?
                }
                (Some(n), _, Format::Csv) => {
                    let r = torsion_finite(&system, point, vector, n, Vec2::new(1.0, 0.0), &policy)?;
                    format!(
                        "n,value,total_winding\n{},{},{}\n",
                        r.horizon,
                        fmt_f(r.value),
                        fmt_f(r.total_winding)
                    )
                }
                (None, Some(n_max), format) => {
                    let series =
                        torsion_asymptotic(&system, point, vector, n_max, Vec2::new(1.0, 0.0), &policy)?;
                    match format {
                        Format::Json => to_json(&Envelope {
                            command: "torsion",
                            system: describe(&system),
                            result: SeriesOut {
                                final_value: series.final_value,
                                cauchy_diagnostic: series.cauchy_diagnostic,
                                values: series
                                    .values
                                    .iter()
                                    .map(|&(n, value)| SeriesEntry { n, value })
                                    .collect(),
                            },
                        })?,
                        Format::Csv => series_csv(&series),
                    }
                }
                (None, None, _) => unreachable!("clap group requires one"),
            };
            emit(&output, body)?;
            Ok(0)
        }

        Command::Linking {
            sys,
            output,
            x,
            y,
            n,
            n_max,
        } => {
            configure_jobs(&output);
            let system = build_system(&sys)?;
            let policy = output.policy();
            let body = match (n, n_max, output.format) {
                (Some(n), _, Format::Json) => {
                    let r = linking_finite(&system, x, y, n, Vec2::new(1.0, 0.0), &policy)?;
                    to_json(&Envelope {
                        command: "linking",
                        system: describe(&system),
                        result: ScalarOut {
                            value: r.value,
                            horizon: r.horizon,
                            total_winding: r.total_winding,
                            min_separation: Some(r.min_separation),
                        },
                    })?
                }
                (Some(n), _, Format::Csv) => {
                    let r = linking_finite(&system, x, y, n, Vec2::new(1.0, 0.0), &policy)?;
                    format!(
                        "n,value,total_winding,min_separation\n{},{},{},{}\n",
                        r.horizon,
                        fmt_f(r.value),
                        fmt_f(r.total_winding),
                        fmt_f(r.min_separation)
                    )
                }
                (None, Some(n_max), format) => {
                    let series =
                        linking_asymptotic(&system, x, y, n_max, Vec2::new(1.0, 0.0), &policy)?;
                    match format {
                        Format::Json => to_json(&Envelope {
                            command: "linking",
                            system: describe(&system),
                            result: SeriesOut {
                                final_value: series.final_value,
                                cauchy_diagnostic: series.cauchy_diagnostic,
                                values: series
                                    .values
                                    .iter()
                                    .map(|&(n, value)| SeriesEntry { n, value })
                                    .collect(),
                            },
                        })?,
                        Format::Csv => series_csv(&series),
                    }
                }
                (None, None, _) => unreachable!("clap group requires one"),
            };
            emit(&output, body)?;
            Ok(0)
        }

        Command::Locate {
            sys,
            output,
            x,
            y,
            n,
            scan,
            tol,
        } => {
            configure_jobs(&output);
            let system = build_system(&sys)?;
            let result = locate_torsion_point(&system, x, y, n, scan, tol, &output.policy())?;
            let body = match output.format {
                Format::Json => to_json(&Envelope {
                    command: "locate",
                    system: describe(&system),
                    result: LocateOut::from_scan(&result),
                })?,
                Format::Csv => scan_csv(&result),
            };
            emit(&output, body)?;
            Ok(if result.located_s.is_some() { 0 } else { 2 })
        }

        Command::TwistSweep {
            sys,
            output,
            points,
            horizons,
        } => {
            configure_jobs(&output);
            let system = build_system(&sys)?;
            let horizons = parse_u32_list(&horizons)?;
            if points == 0 {
                return Err(Error::InvalidParameter {
                    message: "need at least one sample point".into(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(output.seed);
            let sample: Vec<Vec2> = (0..points)
                .map(|_| {
                    Vec2::new(
                        rng.gen::<f64>() * std::f64::consts::TAU,
                        -4.0 + 8.0 * rng.gen::<f64>(),
                    )
                })
                .collect();
            let report = twist_bound_sweep(&system, &sample, &horizons, &output.policy())?;

            #[derive(Serialize)]
            struct EvalOut {
                n: u32,
                point: [f64; 2],
                value: f64,
                pass: bool,
            }
            #[derive(Serialize)]
            struct BandOut {
                n: u32,
                min: f64,
                max: f64,
            }
            #[derive(Serialize)]
            struct SweepOut {
                pass: bool,
                min_twist_coefficient: f64,
                bands: Vec<BandOut>,
                evaluations: Vec<EvalOut>,
            }
            let body = match output.format {
                Format::Json => to_json(&Envelope {
                    command: "twist-sweep",
                    system: describe(&system),
                    result: SweepOut {
                        pass: report.pass,
                        min_twist_coefficient: report.twist.min_coefficient,
                        bands: report
                            .bands
                            .iter()
                            .map(|b| BandOut {
                                n: b.n,
                                min: b.min,
                                max: b.max,
                            })
                            .collect(),
                        evaluations: report
                            .evaluations
                            .iter()
                            .map(|e| EvalOut {
                                n: e.n,
                                point: [e.point.x, e.point.y],
                                value: e.value,
                                pass: e.pass,
                            })
                            .collect(),
                    },
                })?,
                Format::Csv => {
                    let mut out = String::from("index,x,y,n,value,pass\n");
                    for (i, e) in report.evaluations.iter().enumerate() {
                        out.push_str(&format!(
                            "{i},{},{},{},{},{}\n",
                            fmt_f(e.point.x),
                            fmt_f(e.point.y),
                            e.n,
                            fmt_f(e.value),
                            e.pass
                        ));
                    }
                    out
                }
            };
            emit(&output, body)?;
            Ok(if report.pass { 0 } else { 2 })
        }

        Command::Crovisier {
            sys,
            output,
            point,
            vector,
            n,
            tol,
        } => {
            configure_jobs(&output);
            let system = build_system(&sys)?;
            let policy = output.policy();
            let eq = snapshot_equivalence_gap(&system, point, vector, n, &policy)?;
            let sum = snapshot_angle_sum(&system, point, vector, n)?;

            #[derive(Serialize)]
            struct StepOut {
                point: [f64; 2],
                theta0: f64,
                beta: f64,
                theta1: f64,
                summand: f64,
            }
            #[derive(Serialize)]
            struct CrovisierOut {
                theta_n: f64,
                scaled_torsion: f64,
                gap: f64,
                min_twist_coefficient: f64,
                steps: Vec<StepOut>,
            }
            let body = match output.format {
                Format::Json => to_json(&Envelope {
                    command: "crovisier",
                    system: describe(&system),
                    result: CrovisierOut {
                        theta_n: eq.theta_n,
                        scaled_torsion: eq.scaled_torsion,
                        gap: eq.gap,
                        min_twist_coefficient: eq.twist.min_coefficient,
                        steps: sum
                            .steps
                            .iter()
                            .map(|s| StepOut {
                                point: [s.point.x, s.point.y],
                                theta0: s.theta0,
                                beta: s.beta,
                                theta1: s.theta1,
                                summand: s.summand,
                            })
                            .collect(),
                    },
                })?,
                Format::Csv => {
                    let mut out = String::from("step,x,y,theta0,beta,theta1,summand\n");
                    for (k, s) in sum.steps.iter().enumerate() {
                        out.push_str(&format!(
                            "{k},{},{},{},{},{},{}\n",
                            fmt_f(s.point.x),
                            fmt_f(s.point.y),
                            fmt_f(s.theta0),
                            fmt_f(s.beta),
                            fmt_f(s.theta1),
                            fmt_f(s.summand)
                        ));
                    }
                    out
                }
            };
            emit(&output, body)?;
            Ok(if eq.gap <= tol { 0 } else { 2 })
        }

        Command::Measure {
            sys,
            output,
            point,
            vector,
            n,
        } => {
            configure_jobs(&output);
            let system = build_system(&sys)?;
            let policy = output.policy();
            let measure = empirical_measure(&system, point, vector, n)?;
            let torsions = atom_torsions(&system, &measure, &policy)?;
            let average: f64 = measure
                .atoms
                .iter()
                .zip(&torsions)
                .map(|(a, t)| a.weight * t)
                .sum();
            let direct = torsion_finite(&system, point, vector, n, Vec2::new(1.0, 0.0), &policy)?;

            #[derive(Serialize)]
            struct AtomOut {
                point: [f64; 2],
                direction: [f64; 2],
                weight: f64,
                torsion1: f64,
            }
            #[derive(Serialize)]
            struct MeasureOut {
                horizon: u32,
                average_torsion: f64,
                horizon_torsion: f64,
                telescoping_gap: f64,
                atoms: Vec<AtomOut>,
            }
            let body = match output.format {
                Format::Json => to_json(&Envelope {
                    command: "measure",
                    system: describe(&system),
                    result: MeasureOut {
                        horizon: n,
                        average_torsion: average,
                        horizon_torsion: direct.value,
                        telescoping_gap: (average - direct.value).abs(),
                        atoms: measure
                            .atoms
                            .iter()
                            .zip(&torsions)
                            .map(|(a, &t)| AtomOut {
                                point: [a.point.x, a.point.y],
                                direction: [a.direction.x, a.direction.y],
                                weight: a.weight,
                                torsion1: t,
                            })
                            .collect(),
                    },
                })?,
                Format::Csv => {
                    let mut out =
                        String::from("index,x,y,direction_x,direction_y,weight,torsion1\n");
                    for (i, (a, &t)) in measure.atoms.iter().zip(&torsions).enumerate() {
                        out.push_str(&format!(
                            "{i},{},{},{},{},{},{}\n",
                            fmt_f(a.point.x),
                            fmt_f(a.point.y),
                            fmt_f(a.direction.x),
                            fmt_f(a.direction.y),
                            fmt_f(a.weight),
                            fmt_f(t)
                        ));
                    }
                    out
                }
            };
            emit(&output, body)?;
            Ok(0)
        }

        Command::TorusNull {
            sys,
            output,
            n,
            scan,
            tol,
        } => {
            configure_jobs(&output);
            let system = build_system(&sys)?;
            let search = torus_null_torsion_search(&system, n, scan, tol, &output.policy())?;

            #[derive(Serialize)]
            struct NullOut {
                horizon: u32,
                periodicity_deviation: f64,
                translate_linking: f64,
                located_s: Option<f64>,
                located_point: Option<[f64; 2]>,
                residual: f64,
            }
            let body = match output.format {
                Format::Json => to_json(&Envelope {
                    command: "torus-null",
                    system: describe(&system),
                    result: NullOut {
                        horizon: n,
                        periodicity_deviation: search.periodicity_deviation,
                        translate_linking: search.translate_linking,
                        located_s: search.scan.located_s,
                        located_point: search.scan.located_point.map(|p| [p.x, p.y]),
                        residual: search.scan.residual,
                    },
                })?,
                Format::Csv => scan_csv(&search.scan),
            };
            emit(&output, body)?;
            Ok(if search.scan.located_s.is_some() { 0 } else { 2 })
        }

        Command::Wgrid {
            sys,
            output,
            point,
            times,
            s_count,
            tol,
        } => {
            configure_jobs(&output);
            let system = build_system(&sys)?;
            let t_values = parse_f64_list(&times)?;
            let grid = w_grid(
                &system,
                point,
                &t_values,
                s_count,
                Vec2::new(0.0, 1.0),
                &output.policy(),
            )?;
            let report = grid.validate();

            #[derive(Serialize)]
            struct ReportOut {
                identity_deviation: Option<f64>,
                min_s_increment: f64,
                half_turn_deviation: f64,
                ok: bool,
            }
            #[derive(Serialize)]
            struct GridOut {
                s_values: Vec<f64>,
                t_values: Vec<f64>,
                values: Vec<Vec<f64>>,
                report: ReportOut,
            }
            let body = match output.format {
                Format::Json => to_json(&Envelope {
                    command: "wgrid",
                    system: describe(&system),
                    result: GridOut {
                        s_values: grid.s_values.clone(),
                        t_values: grid.t_values.clone(),
                        values: grid.values.clone(),
                        report: ReportOut {
                            identity_deviation: report.identity_deviation,
                            min_s_increment: report.min_s_increment,
                            half_turn_deviation: report.half_turn_deviation,
                            ok: report.ok(tol),
                        },
                    },
                })?,
                Format::Csv => {
                    let mut out = String::from("s,t,w\n");
                    for (i, &s) in grid.s_values.iter().enumerate() {
                        for (j, &t) in grid.t_values.iter().enumerate() {
                            out.push_str(&format!(
                                "{},{},{}\n",
                                fmt_f(s),
                                fmt_f(t),
                                fmt_f(grid.values[i][j])
                            ));
                        }
                    }
                    out
                }
            };
            emit(&output, body)?;
            Ok(if report.ok(tol) { 0 } else { 2 })
        }
    }
}
