use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netiqc::certify::{certify_problem, CertifyOptions};
use netiqc::oracle::{self, SearchOptions};
use netiqc::report::{OracleReport, StructureDump};
use netiqc::sim::{self, Excitation, LinkSample, Signal, SimOptions, UncertaintySample};
use netiqc::{load_spec, Execution, GridSpec, NetworkSpec};

/// Robust-stability certificates for networks with uncertain links.
#[derive(Parser)]
#[command(name = "netiqc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the link-wise conditions. Exit 0 certified, 1 not certified, 2 error.
    Certify {
        spec: PathBuf,
        /// Frequency grid as `min:max:points` (rad/s, logarithmic).
        #[arg(long, value_parser = parse_grid)]
        grid: Option<GridSpec>,
        /// Smallest margin that counts as certified.
        #[arg(long)]
        eps_floor: Option<f64>,
        /// Skip adaptive refinement around the worst frequencies.
        #[arg(long)]
        no_refine: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Search for destabilizing link samples. Exit 0 none found, 1 found, 2 error.
    Oracle {
        spec: PathBuf,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated seconds per sample.
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one trajectory and write it as whitespace-separated columns.
    Simulate {
        spec: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        /// Draw a random unit excitation direction instead of the normalized all-ones one.
        #[arg(long)]
        seed: Option<u64>,
        /// Constant deviation applied to every link.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, value_enum, default_value_t = Shape::Pulse)]
        excitation: Shape,
        /// Pulse width (s) or sine frequency (rad/s).
        #[arg(long, default_value_t = 1.0)]
        param: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Dump P, B, L and the link projectors as JSON.
    Structure {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Pulse,
    Sine,
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, points] = parts.as_slice() else {
        return Err(format!("expected min:max:points, got {s:?}"));
    };
    let spec = GridSpec {
        min: min.parse().map_err(|e| format!("bad min: {e}"))?,
        max: max.parse().map_err(|e| format!("bad max: {e}"))?,
        points: points.parse().map_err(|e| format!("bad point count: {e}"))?,
        ..GridSpec::default()
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

type Failure = Box<dyn std::error::Error>;

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Certify {
            spec,
            grid,
            eps_floor,
            no_refine,
            common,
        } => {
            let mut spec: NetworkSpec = load_spec(&spec)?;
            if let Some(g) = grid {
                spec.grid = GridSpec {
                    include_zero: spec.grid.include_zero,
                    extra: spec.grid.extra.clone(),
                    ..g
                };
            }
            if let Some(e) = eps_floor {
                spec.tolerances.eps_floor = e;
            }
            let problem = spec.to_problem()?;
            let opts = CertifyOptions {
                tolerances: spec.tolerances.clone(),
                execution: common.execution(),
                refine: !no_refine,
                ..CertifyOptions::default()
            };
            let report = certify_problem(&problem, &spec.frequency_grid()?, &opts)?;
            write_json(&report, common.out.as_deref())?;
            Ok(if report.is_certified() { 0 } else { 1 })
        }
        Command::Oracle {
            spec,
            samples,
            seed,
            horizon,
            dt,
            common,
        } => {
            let problem = load_spec(&spec)?.to_problem()?;
            let opts = SearchOptions {
                samples,
                seed,
                horizon,
                dt,
                execution: common.execution(),
                ..SearchOptions::default()
            };
            let radii: Vec<f64> = problem
                .multipliers
                .iter()
                .map(|m| oracle::class_radius(m).unwrap_or(0.0))
                .collect();
            let result = oracle::destabilization_search(&problem, &radii, &opts)?;
            let found = result.is_found();
            write_json(&OracleReport::new(opts, radii, result), common.out.as_deref())?;
            Ok(u8::from(found))
        }
        Command::Simulate {
            spec,
            dt,
            horizon,
            seed,
            delta,
            excitation,
            param,
            common,
        } => {
            let problem = load_spec(&spec)?.to_problem()?;
            let dim = problem.structure.link_dim();
            let direction: Vec<f64> = match seed {
                Some(s) => {
                    let radii = vec![0.0; dim];
                    match oracle::draw_sample(&radii, 0, s, false).1.v {
                        Signal::Pulse { direction, .. } => direction,
                        _ => unreachable!("draw_sample excites with a pulse"),
                    }
                }
                None => vec![1.0 / (dim as f64).sqrt(); dim],
            };
            let signal = match excitation {
                Shape::Pulse => Signal::Pulse {
                    direction,
                    width: param,
                },
                Shape::Sine => Signal::Sine {
                    direction,
                    omega: param,
                },
            };
            let sample = UncertaintySample::uniform(dim, LinkSample::Constant { delta });
            let trace = sim::simulate(
                &problem,
                &sample,
                &Excitation {
                    v: signal,
                    w: Signal::Zero,
                },
                &SimOptions {
                    dt,
                    horizon,
                    ..SimOptions::default()
                },
            )?;
            let mut out = output(common.out.as_deref())?;
            trace.write_columns(&mut out)?;
            out.flush()?;
            Ok(0)
        }
        Command::Structure { spec, common } => {
            let problem = load_spec(&spec)?.to_problem()?;
            write_json(
                &StructureDump::new(&problem.graph, &problem.structure),
                common.out.as_deref(),
            )?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
