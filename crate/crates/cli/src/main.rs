use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use envelope_lab::construction::{build_stage, StageConfig};
use envelope_lab::envelope::{
    compute_envelope, contact_set, folding_region, grid_points, Envelope, SampledFunction, Side,
    DEFAULT_TOL_CONTACT,
};
use envelope_lab::holder::{default_bin_edges, dyadic_scales, spectrum, CellFlag, HolderGrid};
use envelope_lab::io::{
    coordinate_header, csv_table, format_float, samples_from_csv, samples_to_csv, to_json,
    write_atomic,
};
use envelope_lab::verify::{run_verification, VerifyConfig};
use envelope_lab::{Error, Field};

const THREADS_VAR: &str = "ENVELOPE_LAB_THREADS";

#[derive(Parser)]
#[command(name = "envelope-lab", version, about = "Convex envelopes and generic-function stages on the unit cube")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build stage f_{n,m} and write its descriptor and samples.
    Synthesize(SynthesizeArgs),
    /// Compute both envelopes of a sample file.
    Envelope(EnvelopeArgs),
    /// Hölder field and singularity spectrum of an envelope.
    Analyze(AnalyzeArgs),
    /// Run the stage checks and write a verification report.
    Verify(VerifyArgs),
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SynthesizeArgs {
    /// JSON file with any of the flags below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    vertex_cap: Option<usize>,
    /// Also write plot.csv with columns x, f, phi1, phi2.
    #[arg(long)]
    #[serde(default)]
    emit_plot_data: bool,
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EnvelopeArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Sample CSV with columns x1..xd, f.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol_contact: Option<f64>,
    #[arg(long)]
    jump_threshold: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    emit_plot_data: bool,
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AnalyzeArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// upper or lower.
    #[arg(long)]
    side: Option<String>,
    /// Grid intervals per axis.
    #[arg(long)]
    intervals: Option<usize>,
    /// Scale ladder exponents `lo,hi` for radii 2^-lo..2^-hi.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<u32>>,
    #[arg(long)]
    poly_order: Option<u8>,
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct VerifyArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    /// Stage `n,m`; repeat for several stages.
    #[arg(long = "stage", value_parser = parse_stage)]
    stages: Option<Vec<(u32, u32)>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_stage(s: &str) -> Result<(u32, u32), String> {
    let (n, m) = s.split_once(',').ok_or("expected n,m")?;
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("{t}: {e}"));
    Ok((parse(n)?, parse(m)?))
}

enum Failure {
    Config(String),
    Io(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Verification(m) => m,
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> Failure {
    Failure::Io(e.to_string())
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn require<T>(v: Option<T>, name: &str) -> CliResult<T> {
    v.ok_or_else(|| Failure::Config(format!("missing required setting `{name}`")))
}

fn positive(v: f64, name: &str) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::Config(format!("`{name}` must be positive, got {v}")))
    }
}

fn out_dir(out: Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = out.unwrap_or_else(|| PathBuf::from("envelope-lab-out"));
    std::fs::create_dir_all(&dir).map_err(|e| io_err(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let path = dir.join(name);
    write_atomic(&path, bytes).map_err(|e| io_err(format!("{}: {e}", path.display())))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> CliResult<()> {
    let text = to_json(value).map_err(config_err)?;
    write(dir, name, text.as_bytes())
}

fn read_samples(path: &Path) -> CliResult<SampledFunction> {
    let bytes = std::fs::read(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    samples_from_csv(&bytes).map_err(|e| io_err(format!("{}: {e}", path.display())))
}

/// Rows `x.., f, phi1, phi2` at `points`.
fn plot_rows(
    points: &[Vec<f64>],
    f: impl Fn(usize, &[f64]) -> f64,
    upper: &Envelope,
    lower: &Envelope,
) -> CliResult<Vec<u8>> {
    let mut header = coordinate_header(upper.dim());
    header.extend(["f", "phi1", "phi2"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|&c| format_float(c)).collect();
        row.push(format_float(f(i, p)));
        row.push(format_float(upper.eval(p).map_err(config_err)?));
        row.push(format_float(lower.eval(p).map_err(config_err)?));
        rows.push(row);
    }
    csv_table(&header, rows).map_err(config_err)
}

#[derive(Serialize)]
struct StageFile<'a> {
    #[serde(flatten)]
    descriptor: envelope_lab::construction::StageDescriptor,
    vertices: &'a [Vec<f64>],
    contact_points: Vec<Vec<f64>>,
}

fn synthesize(flags: SynthesizeArgs) -> CliResult<()> {
    let file: SynthesizeArgs = load_config(flags.config.as_deref())?;
    let d = require(flags.d.or(file.d), "d")?;
    let n = require(flags.n.or(file.n), "n")?;
    let m = require(flags.m.or(file.m), "m")?;
    let seed = require(flags.seed.or(file.seed), "seed")?;
    if !(1..=2).contains(&d) {
        return Err(Failure::Config(format!("d = {d} is not supported; use 1 or 2")));
    }
    let mut cfg = StageConfig::new(d, n, m, seed);
    if let Some(cap) = flags.vertex_cap.or(file.vertex_cap) {
        cfg.vertex_cap = cap;
    }
    let stage = build_stage(&cfg).map_err(config_err)?;
    let dir = out_dir(flags.out.or(file.out))?;
    let doc = StageFile {
        descriptor: stage.descriptor(),
        vertices: stage.vertices(),
        contact_points: stage.contact.points(&stage.samples),
    };
    write_json(&dir, "stage.json", &doc)?;
    write(&dir, "samples.csv", &samples_to_csv(&stage.samples).map_err(config_err)?)?;
    if flags.emit_plot_data || file.emit_plot_data {
        let lower = compute_envelope(&stage.samples, Side::Lower).map_err(config_err)?;
        let points = grid_points(d, if d == 1 { 1025 } else { 65 });
        let csv = plot_rows(&points, |_, x| stage.value(x), &stage.envelope, &lower)?;
        write(&dir, "plot.csv", &csv)?;
    }
    println!(
        "stage ({n},{m}) d={d}: {} vertices, {} samples, {} contacts, {} folds -> {}",
        stage.params.vertex_count,
        stage.samples.len(),
        stage.contact.indices.len(),
        stage.folding.faces.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ContactFile {
    side: Side,
    tol_contact: f64,
    indices: Vec<usize>,
    points: Vec<Vec<f64>>,
}

fn envelope(flags: EnvelopeArgs) -> CliResult<()> {
    let file: EnvelopeArgs = load_config(flags.config.as_deref())?;
    let input = require(flags.input.or(file.input), "input")?;
    let tol = positive(flags.tol_contact.or(file.tol_contact).unwrap_or(DEFAULT_TOL_CONTACT), "tol_contact")?;
    let jump = positive(
        flags
            .jump_threshold
            .or(file.jump_threshold)
            .unwrap_or(envelope_lab::construction::DEFAULT_JUMP_THRESHOLD),
        "jump_threshold",
    )?;
    let samples = read_samples(&input)?;
    let dir = out_dir(flags.out.or(file.out))?;
    let mut envelopes = Vec::new();
    for side in [Side::Upper, Side::Lower] {
        let e = compute_envelope(&samples, side).map_err(io_err)?;
        let name = match side {
            Side::Upper => "upper",
            Side::Lower => "lower",
        };
        let contact = contact_set(&samples, &e, tol);
        write_json(&dir, &format!("envelope_{name}.json"), &e.to_document())?;
        write_json(
            &dir,
            &format!("contact_{name}.json"),
            &ContactFile {
                side,
                tol_contact: tol,
                points: contact.points(&samples),
                indices: contact.indices,
            },
        )?;
        write_json(&dir, &format!("folding_{name}.json"), &folding_region(&e, jump, 0.0))?;
        println!("{name}: {} facets", e.facets().len());
        envelopes.push(e);
    }
    if flags.emit_plot_data || file.emit_plot_data {
        let csv = plot_rows(samples.points(), |i, _| samples.values()[i], &envelopes[0], &envelopes[1])?;
        write(&dir, "plot.csv", &csv)?;
    }
    Ok(())
}

fn analyze(flags: AnalyzeArgs) -> CliResult<()> {
    let file: AnalyzeArgs = load_config(flags.config.as_deref())?;
    let input = require(flags.input.or(file.input), "input")?;
    let side = match flags.side.or(file.side).as_deref().unwrap_or("upper") {
        "upper" => Side::Upper,
        "lower" => Side::Lower,
        other => return Err(Failure::Config(format!("side `{other}` is not upper or lower"))),
    };
    let poly_order = flags.poly_order.or(file.poly_order).unwrap_or(1);
    if poly_order > 1 {
        return Err(Failure::Config(format!("poly_order {poly_order} is not 0 or 1")));
    }
    let samples = read_samples(&input)?;
    let dim = samples.dim();
    let intervals = flags
        .intervals
        .or(file.intervals)
        .unwrap_or(if dim == 1 { 1024 } else { 128 });
    let scales = match flags.scales.or(file.scales) {
        Some(v) if v.len() == 2 && v[0] + 3 <= v[1] => dyadic_scales(v[0], v[1]),
        Some(v) => return Err(Failure::Config(format!("scales {v:?} must be lo,hi with hi >= lo + 3"))),
        None => envelope_lab::holder::default_scales(dim),
    };
    let grid = HolderGrid::new(dim, intervals).map_err(config_err)?;
    let e = compute_envelope(&samples, side).map_err(io_err)?;
    let (spec, cells) = spectrum(&e, &grid, &scales, poly_order, &default_bin_edges()).map_err(config_err)?;
    let dir = out_dir(flags.out.or(file.out))?;
    let mut header = coordinate_header(dim);
    header.extend(["h_hat", "r2", "flag"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = cells.iter().map(|c| {
        let mut row: Vec<String> = c.x.iter().map(|&v| format_float(v)).collect();
        row.push(match (c.flag, c.h_hat) {
            (CellFlag::Cap, _) => "CAP".into(),
            (_, Some(h)) => format_float(h),
            _ => String::new(),
        });
        row.push(c.r2.map(format_float).unwrap_or_default());
        row.push(format!("{:?}", c.flag).to_uppercase());
        row
    });
    write(&dir, "holder.csv", &csv_table(&header, rows).map_err(config_err)?)?;
    write_json(&dir, "spectrum.json", &spec)?;
    for b in &spec.bins {
        let dim = b.dimension.value.map_or("EMPTY".to_string(), |v| format!("{v:.4}"));
        println!("{:<14} {:>8} cells  dimension {dim}", b.label, b.count);
    }
    Ok(())
}

fn verify(flags: VerifyArgs) -> CliResult<()> {
    let file: VerifyArgs = load_config(flags.config.as_deref())?;
    let d = require(flags.d.or(file.d), "d")?;
    let stages = flags.stages.or(file.stages).unwrap_or_default();
    let seed = require(flags.seed.or(file.seed), "seed")?;
    if stages.is_empty() {
        return Err(Failure::Config("stage list is empty".into()));
    }
    if !(1..=2).contains(&d) {
        return Err(Failure::Config(format!("d = {d} is not supported; use 1 or 2")));
    }
    let report = run_verification(&VerifyConfig::new(d, stages, seed)).map_err(config_err)?;
    let dir = out_dir(flags.out.or(file.out))?;
    write_json(&dir, "report.json", &report)?;
    print!("{}", report.table());
    if report.all_pass {
        Ok(())
    } else {
        Err(Failure::Verification("verification failed".into()))
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("{THREADS_VAR}={raw} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Synthesize(a) => synthesize(a),
        Command::Envelope(a) => envelope(a),
        Command::Analyze(a) => analyze(a),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
