mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use wpot::fourier::{closed_form_spectrum, nonvanishing_scan_at, DEFAULT_RESOLUTION, ZERO_THRESHOLD};
use wpot::manifold::{Manifold, ManifoldKind, Point};
use wpot::measure::{DiscreteMeasure, MeasureJson};
use wpot::potential::{GridLayout, PotentialOracle, SampledPotential};
use wpot::recovery::{recover_sphere_weights, recover_torus_marginals_p2, recover_torus_weights, MARGINAL_RESOLUTION};
use wpot::transport::solve_transport;
use wpot::verify::{run_suite, Suite, SuiteConfig};

use output::{to_json, write_atomic};

#[derive(Parser)]
#[command(name = "wpot", version, about = "Exact optimal transport and Wasserstein potentials on tori and spheres")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Wasserstein distance between two measures.
    Dist {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_parser = parse_p)]
        p: f64,
        /// Write the transport result (distance, cost, coupling) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the potential of a measure on a regular grid, as CSV.
    Potential {
        measure: PathBuf,
        /// Nodes per axis.
        #[arg(long)]
        grid: usize,
        #[arg(long, default_value_t = 1.0, value_parser = parse_p)]
        p: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fourier coefficients of the circle cost |t|^p.
    Fourier {
        #[arg(long, value_parser = parse_p)]
        p: f64,
        #[arg(long)]
        jmax: usize,
        /// Use the closed form (only p = 1 and p = 2).
        #[arg(long)]
        closed_form: bool,
        /// Quadrature panels, a power of two.
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
        #[arg(long, default_value_t = ZERO_THRESHOLD)]
        threshold: f64,
        /// Output format; defaults to csv when --out ends in .csv.
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover atom weights (or p = 2 marginals) from a potential.
    Recover {
        /// Sampled potential (.csv) or a measure (.json) whose exact potential is used.
        input: PathBuf,
        /// Candidate sites: `[[..], ..]` or a measure file whose support is used.
        #[arg(long)]
        sites: Option<PathBuf>,
        #[arg(long, value_parser = parse_p)]
        p: Option<f64>,
        /// Manifold of a CSV without a metadata line.
        #[arg(long, value_enum)]
        manifold: Option<Kind>,
        #[arg(long)]
        n: Option<usize>,
        /// Scan points per axis for p = 2 marginals.
        #[arg(long, default_value_t = MARGINAL_RESOLUTION)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run randomized verification suites.
    Verify {
        /// `all` or one of: isometry, injectivity, diameter, marginals, recovery, segment, fourier, center.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        manifold: Option<Kind>,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, value_parser = parse_p)]
        p: Option<f64>,
        /// Tolerance override, `name=value`; repeatable.
        #[arg(long = "tol", value_parser = parse_tol)]
        tol: Vec<(String, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Torus,
    Sphere,
}

impl From<Kind> for ManifoldKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Torus => ManifoldKind::Torus,
            Kind::Sphere => ManifoldKind::Sphere,
        }
    }
}

fn parse_p(s: &str) -> std::result::Result<f64, String> {
    let p: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if p >= 1.0 && p.is_finite() {
        Ok(p)
    } else {
        Err(format!("p must be a finite real >= 1, got {s}"))
    }
}

fn parse_tol(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    let v: f64 = v.parse().map_err(|e| format!("tolerance '{k}': {e}"))?;
    Ok((k.to_string(), v))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| anyhow!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
}

fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let mut raw: MeasureJson = parse_json(path, &read(path)?)?;
    let dropped = raw.drop_zero_weights();
    if dropped > 0 {
        eprintln!("warning: {}: dropped {dropped} zero-weight atom(s)", path.display());
    }
    raw.into_measure().with_context(|| format!("{}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SitesFile {
    Bare(Vec<Vec<f64>>),
    Measure(MeasureJson),
}

fn read_sites(path: &Path, m: &Manifold) -> Result<Vec<Point>> {
    let coords = match parse_json::<SitesFile>(path, &read(path)?)? {
        SitesFile::Bare(c) => c,
        SitesFile::Measure(mj) => mj.support,
    };
    coords
        .iter()
        .enumerate()
        .map(|(i, c)| m.point(c).with_context(|| format!("{}: site {i}", path.display())))
        .collect()
}

fn dist(a: &Path, b: &Path, p: f64, out: Option<&Path>) -> Result<()> {
    let r = solve_transport(&read_measure(a)?, &read_measure(b)?, p)?;
    println!("{:.16e}", r.distance);
    if let Some(path) = out {
        write_atomic(path, &to_json(&r)?)?;
    }
    Ok(())
}

fn potential(measure: &Path, grid: usize, p: f64, out: Option<&Path>) -> Result<()> {
    let mu = read_measure(measure)?;
    let layout = GridLayout::uniform(mu.manifold(), grid)?;
    emit(out, &SampledPotential::from_measure(&mu, p, layout)?.to_csv())
}

#[allow(clippy::too_many_arguments)]
fn fourier(
    p: f64,
    jmax: usize,
    closed: bool,
    resolution: usize,
    threshold: f64,
    format: Option<Format>,
    out: Option<&Path>,
) -> Result<()> {
    let report = if closed {
        closed_form_spectrum(p, jmax, threshold)?
    } else {
        nonvanishing_scan_at(p, jmax, threshold, resolution)?
    };
    let csv = match format {
        Some(f) => matches!(f, Format::Csv),
        None => out.is_some_and(|o| o.extension().is_some_and(|e| e == "csv")),
    };
    emit(out, &if csv { report.to_csv() } else { to_json(&report)? })
}

#[allow(clippy::too_many_arguments)]
fn recover(
    input: &Path,
    sites: Option<&Path>,
    p: Option<f64>,
    kind: Option<Kind>,
    n: Option<usize>,
    resolution: usize,
    out: Option<&Path>,
) -> Result<()> {
    let is_json = input.extension().is_some_and(|e| e == "json");
    let (oracle, default_sites) = if is_json {
        let mu = read_measure(input)?;
        let p = p.ok_or_else(|| anyhow!("--p is required when the input is a measure"))?;
        let support = mu.support().to_vec();
        (PotentialOracle::closed_form(mu, p)?, Some(support))
    } else {
        let fallback = match (kind, p) {
            (Some(k), Some(p)) => Some((Manifold::new(k.into(), n.unwrap_or(2))?, p)),
            (Some(_), None) => bail!("--manifold needs --p as well"),
            _ => None,
        };
        let grid = SampledPotential::from_csv(&read(input)?, fallback).with_context(|| format!("{}", input.display()))?;
        if let Some(p) = p {
            if p != grid.p() {
                eprintln!("warning: {}: using p = {} from the file, not --p {p}", input.display(), grid.p());
            }
        }
        (PotentialOracle::Sampled(grid), None)
    };
    let m = *oracle.manifold();
    if m.is_torus() && m.n() >= 2 && oracle.p() == 2.0 {
        let marginals = recover_torus_marginals_p2(&oracle, resolution)?;
        let json: Vec<MeasureJson> = marginals.iter().map(MeasureJson::from).collect();
        return emit(out, &to_json(&json)?);
    }
    let sites = match (sites, default_sites) {
        (Some(path), _) => read_sites(path, &m)?,
        (None, Some(s)) => s,
        (None, None) => bail!("--sites is required for a sampled potential"),
    };
    let result = if m.is_torus() { recover_torus_weights(&oracle, &sites)? } else { recover_sphere_weights(&oracle, &sites)? };
    emit(out, &to_json(&result)?)
}

/// Returns whether every suite passed.
#[allow(clippy::too_many_arguments)]
fn verify(
    suite: &str,
    seed: u64,
    trials: Option<usize>,
    kind: Option<Kind>,
    n: usize,
    p: Option<f64>,
    tol: &[(String, f64)],
    out: Option<&Path>,
) -> Result<bool> {
    let manifold = kind.map(|k| Manifold::new(k.into(), n)).transpose()?;
    let all = suite == "all";
    let suites: Vec<Suite> = if all { Suite::ALL.to_vec() } else { vec![Suite::parse(suite)?] };
    if all {
        for (k, _) in tol {
            if !Suite::ALL.iter().any(|s| s.default_tolerances().iter().any(|(name, _)| name == k)) {
                bail!("no suite has a tolerance named '{k}'");
            }
        }
    }
    let mut reports = Vec::new();
    for s in suites {
        let torus_only = matches!(s, Suite::MarginalsP2 | Suite::CenterOfMass);
        if all && torus_only && manifold.is_some_and(|m| m.is_sphere()) {
            eprintln!("skipping {} (torus only)", s.name());
            continue;
        }
        let mut cfg = SuiteConfig::new(s, seed);
        cfg.manifold = manifold;
        if let Some(t) = trials {
            cfg.trials = t;
        }
        cfg.p = if s == Suite::MarginalsP2 { 2.0 } else { p.unwrap_or(1.0) };
        let mut tolerances = BTreeMap::new();
        for (k, v) in tol {
            if !all || s.default_tolerances().iter().any(|(name, _)| name == k) {
                tolerances.insert(k.clone(), *v);
            }
        }
        cfg.tolerances = tolerances;
        let report = run_suite(&cfg)?;
        print!("{}", report.to_text());
        reports.push(report);
    }
    if let Some(path) = out {
        write_atomic(path, &to_json(&reports)?)?;
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Dist { a, b, p, out } => dist(&a, &b, p, out.as_deref())?,
        Cmd::Potential { measure, grid, p, out } => potential(&measure, grid, p, out.as_deref())?,
        Cmd::Fourier { p, jmax, closed_form, resolution, threshold, format, out } => {
            fourier(p, jmax, closed_form, resolution, threshold, format, out.as_deref())?
        }
        Cmd::Recover { input, sites, p, manifold, n, resolution, out } => {
            recover(&input, sites.as_deref(), p, manifold, n, resolution, out.as_deref())?
        }
        Cmd::Verify { suite, seed, trials, manifold, n, p, tol, out } => {
            if !verify(&suite, seed, trials, manifold, n, p, &tol, out.as_deref())? {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors by itself
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
