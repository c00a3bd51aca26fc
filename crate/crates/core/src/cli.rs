//! Command-line front end. Data goes to files or standard output, diagnostics
//! to standard error. Exit status: 0 success, 1 domain error or failed
//! reproduction, 2 usage error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dispersion::{Dispersion, Momentum};
use crate::error::{Error, Result};
use crate::greens::GreensFunction;
use crate::lattice::{build_roots, LatticeSpec};
use crate::reproduce;
use crate::returnprob::estimate_return;
use crate::sampler::{sample_dos, DosHistogram, SamplerConfig, WeightMode};
use crate::vanhove::{epsilon_max, find_critical_points, SearchConfig, VanHoveCatalog};
use crate::walks::{to_bfile, walk_counts};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser, Serialize)]
#[command(name = "adelattice", version, about = "Tight-binding spectra of the ADE root lattices")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Gnuplot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Critical-point catalogs.
    Table1,
    /// Skewness, extremum multiplicities, tail constants, return probabilities.
    Table2,
    /// Closed-walk counts W_3..W_8.
    Table3,
    /// Sampled densities: normalization, moments, edge exponents.
    #[value(alias = "fig_dos")]
    FigDos,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Roots, lattice basis, Gram matrix and kissing number as JSON.
    Roots {
        #[arg(long, value_parser = parse_lattice)]
        lattice: LatticeSpec,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy, gradient and Hessian eigenvalues at one momentum.
    Band {
        #[arg(long, value_parser = parse_lattice)]
        lattice: LatticeSpec,
        /// Fractional coordinates, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Vec<f64>,
    },
    /// Density of states by Metropolis sampling.
    Dos {
        #[arg(long, value_parser = parse_lattice)]
        lattice: LatticeSpec,
        #[arg(long, default_value = "1e7", value_parser = parse_count)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        chains: usize,
        #[arg(long, value_enum, default_value_t = WeightMode::TailFlattened)]
        weight: WeightMode,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Green's function from a density-of-states CSV.
    Greens {
        #[arg(long, value_parser = parse_lattice)]
        lattice: LatticeSpec,
        #[arg(long)]
        dos: PathBuf,
        /// Catalog JSON from `vanhove` for the plot markers; searched afresh if absent.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Van Hove singularity catalog.
    Vanhove {
        #[arg(long, value_parser = parse_lattice)]
        lattice: LatticeSpec,
        #[arg(long, default_value = "1e4", value_parser = parse_count)]
        starts: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact closed-walk counts.
    Walks {
        #[arg(long, value_parser = parse_lattice)]
        lattice: LatticeSpec,
        #[arg(long, default_value_t = 8)]
        nmax: usize,
        /// Integer-sequence b-file (index and value per line) instead of JSON.
        #[arg(long)]
        oeis: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Return probability of the nearest-neighbour random walk.
    Returnprob {
        #[arg(long, value_parser = parse_lattice)]
        lattice: LatticeSpec,
        #[arg(long, default_value = "1e8", value_parser = parse_count)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recomputes a reference table and diffs it against the embedded values.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        #[arg(long, default_value = "1e5", value_parser = parse_count)]
        starts: u64,
        #[arg(long, default_value = "1e9", value_parser = parse_count)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the histograms written by `fig-dos`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_lattice(s: &str) -> std::result::Result<LatticeSpec, String> {
    LatticeSpec::from_str(s).map_err(|e| e.to_string())
}

/// Accepts plain integers and exact scientific notation such as `1e9`.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("'{s}' is not a count"))?;
    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63) {
        Ok(x as u64)
    } else {
        Err(format!("'{s}' is not a non-negative integer"))
    }
}

/// Written next to every output file as `<file>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub schema_version: u32,
    pub subcommand: &'a str,
    pub config: &'a Cli,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub wall_time_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return 2;
        }
    }
    match run(&cli) {
        Ok(status) => status,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(e.into())
    }
}

fn usage<T>(m: impl Into<String>) -> std::result::Result<T, Failure> {
    Err(Failure::Usage(m.into()))
}

fn run(cli: &Cli) -> std::result::Result<i32, Failure> {
    let start = Instant::now();
    let mut outputs = Vec::new();
    let (name, seed) = match &cli.command {
        Command::Roots { lattice, out } => {
            let rs = build_roots(*lattice)?;
            let gram = rs.gram();
            let body = json!({
                "schema_version": SCHEMA_VERSION,
                "lattice": lattice.to_string(),
                "dim": rs.dim(),
                "ambient_dim": rs.ambient_dim(),
                "tau": rs.tau(),
                "roots": rs.roots(),
                "basis": rs.lattice_basis(),
                "gram": gram,
                "gram_determinant": integer_determinant(&gram),
            });
            emit_json(&body, out.as_deref(), &mut outputs)?;
            ("roots", None)
        }
        Command::Band { lattice, at } => {
            let disp = Dispersion::new(&build_roots(*lattice)?);
            if at.len() != disp.dim() {
                return usage(format!("--at needs {} coordinates for {lattice}, got {}", disp.dim(), at.len()));
            }
            let u = Momentum::new(at.clone());
            let eig = disp.cartesian_hessian(at).symmetric_eigenvalues();
            let mut eig: Vec<f64> = eig.iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            let body = json!({
                "schema_version": SCHEMA_VERSION,
                "lattice": lattice.to_string(),
                "u": at,
                "energy": disp.energy(&u),
                "gradient": disp.gradient(at),
                "hessian_eigenvalues": eig,
            });
            emit_json(&body, None, &mut outputs)?;
            ("band", None)
        }
        Command::Dos { lattice, samples, seed, chains, weight, format, out } => {
            let disp = Dispersion::new(&build_roots(*lattice)?);
            let (emax, _) = epsilon_max(&disp)?;
            let mut cfg = SamplerConfig::new(*lattice, emax);
            cfg.n_samples = *samples;
            cfg.seed = *seed;
            cfg.n_chains = *chains;
            cfg.weight_mode = *weight;
            if let Err(Error::InvalidConfig(m)) = cfg.validate() {
                return usage(m);
            }
            let h = sample_dos(&disp, &cfg)?;
            match format {
                Format::Csv => emit(out.as_deref(), &mut outputs, |w| h.write_csv(w))?,
                Format::Gnuplot => emit(out.as_deref(), &mut outputs, |w| h.write_gnuplot(w))?,
                Format::Json => emit_json(&histogram_json(&h), out.as_deref(), &mut outputs)?,
            }
            ("dos", Some(*seed))
        }
        Command::Greens { lattice, dos, catalog, format, out } => {
            let h = DosHistogram::read_csv(File::open(dos)?)?;
            if h.lattice != *lattice {
                return usage(format!("{} holds a {} density, not {lattice}", dos.display(), h.lattice));
            }
            let cat: VanHoveCatalog = match catalog {
                Some(p) => {
                    let v: Value = serde_json::from_reader(File::open(p)?).map_err(Error::from)?;
                    serde_json::from_value(v.get("catalog").cloned().unwrap_or(v)).map_err(Error::from)?
                }
                None => find_critical_points(&Dispersion::new(&build_roots(*lattice)?), &SearchConfig::default())?,
            };
            let mut gf = GreensFunction::on_midpoints(&h);
            gf.markers = cat.critical_points.iter().map(|c| c.energy).collect();
            gf.markers.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            match format {
                Format::Csv => emit(out.as_deref(), &mut outputs, |w| gf.write_csv(w))?,
                Format::Json => {
                    let body = json!({
                        "schema_version": SCHEMA_VERSION,
                        "lattice": lattice.to_string(),
                        "epsilon_min": gf.epsilon_min,
                        "epsilon_max": gf.epsilon_max,
                        "markers": gf.markers,
                        "energy": gf.energy,
                        "re_g": gf.re,
                        "im_g": gf.im,
                    });
                    emit_json(&body, out.as_deref(), &mut outputs)?
                }
                Format::Gnuplot => return usage("greens writes csv or json"),
            }
            ("greens", None)
        }
        Command::Vanhove { lattice, starts, seed, out } => {
            let disp = Dispersion::new(&build_roots(*lattice)?);
            let cfg = SearchConfig { n_starts: *starts as usize, seed: *seed, ..Default::default() };
            let cat = find_critical_points(&disp, &cfg)?;
            let body = json!({ "schema_version": SCHEMA_VERSION, "catalog": cat });
            emit_json(&body, out.as_deref(), &mut outputs)?;
            ("vanhove", Some(*seed))
        }
        Command::Walks { lattice, nmax, oeis, out } => {
            let t = walk_counts(&build_roots(*lattice)?, *nmax)?;
            if *oeis {
                emit(out.as_deref(), &mut outputs, |w| Ok(w.write_all(to_bfile(&t).as_bytes())?))?;
            } else {
                let mut body = serde_json::to_value(&t).map_err(Error::from)?;
                body["schema_version"] = json!(SCHEMA_VERSION);
                emit_json(&body, out.as_deref(), &mut outputs)?;
            }
            ("walks", None)
        }
        Command::Returnprob { lattice, samples, seed, out } => {
            let disp = Dispersion::new(&build_roots(*lattice)?);
            let est = estimate_return(&disp, *samples, *seed).map_err(|e| match e {
                Error::InvalidConfig(m) => Failure::Usage(m),
                e => Failure::Domain(e),
            })?;
            let mut body = serde_json::to_value(est).map_err(Error::from)?;
            body["schema_version"] = json!(SCHEMA_VERSION);
            body["lattice"] = json!(lattice.to_string());
            emit_json(&body, out.as_deref(), &mut outputs)?;
            ("returnprob", Some(*seed))
        }
        Command::Reproduce { target, starts, samples, seed, out } => {
            let report = match target {
                Target::Table1 => reproduce::table1(*starts as usize, *seed)?.0,
                Target::Table2 => reproduce::table2(*starts as usize, *samples, *seed)?,
                Target::Table3 => reproduce::table3()?,
                Target::FigDos => {
                    if let Some(dir) = out {
                        std::fs::create_dir_all(dir)?;
                    }
                    let mut written = Vec::new();
                    let r = reproduce::fig_dos(*samples, *seed, |h| {
                        if let Some(dir) = out {
                            let csv = dir.join(format!("dos_{}.csv", h.lattice.to_string().to_lowercase()));
                            let dat = csv.with_extension("dat");
                            h.write_csv(BufWriter::new(File::create(&csv)?))?;
                            h.write_gnuplot(BufWriter::new(File::create(&dat)?))?;
                            written.extend([csv, dat]);
                        }
                        Ok(())
                    })?;
                    outputs.extend(written);
                    r
                }
            };
            println!("{report}");
            if let Some(dir) = out.as_ref().filter(|_| !outputs.is_empty()) {
                write_manifest(cli, "reproduce", Some(*seed), start, &outputs, &dir.join("reproduce"))?;
            }
            return Ok(if report.all_pass() { 0 } else { 1 });
        }
    };
    if let Some(first) = outputs.first().cloned() {
        write_manifest(cli, name, seed, start, &outputs, &first)?;
    }
    Ok(0)
}

fn write_manifest(cli: &Cli, name: &str, seed: Option<u64>, start: Instant, outputs: &[PathBuf], stem: &Path) -> Result<()> {
    let m = RunManifest {
        schema_version: SCHEMA_VERSION,
        subcommand: name,
        config: cli,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: outputs.to_vec(),
    };
    let mut path = stem.as_os_str().to_owned();
    path.push(".manifest.json");
    let mut f = BufWriter::new(File::create(PathBuf::from(path))?);
    serde_json::to_writer_pretty(&mut f, &m)?;
    writeln!(f)?;
    Ok(())
}

/// Writes through `f` to `out` if given, else to standard output.
fn emit(out: Option<&Path>, outputs: &mut Vec<PathBuf>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            outputs.push(p.to_path_buf());
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn emit_json(body: &Value, out: Option<&Path>, outputs: &mut Vec<PathBuf>) -> Result<()> {
    emit(out, outputs, |w| {
        serde_json::to_writer_pretty(&mut *w, body)?;
        writeln!(w)?;
        Ok(())
    })
}

fn histogram_json(h: &DosHistogram) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "lattice": h.lattice.to_string(),
        "epsilon_min": h.epsilon_min,
        "epsilon_max": h.epsilon_max,
        "total_samples": h.total_samples,
        "ess": h.ess,
        "edges": h.edges(),
        "density": h.density,
        "stderr": h.stderr,
    })
}

/// Exact determinant of a small integer matrix by fraction-free elimination.
fn integer_determinant(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    let mut a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    if n == 0 {
        1
    } else {
        sign * a[n - 1][n - 1]
    }
}
