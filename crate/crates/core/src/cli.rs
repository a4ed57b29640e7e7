//! Command-line front end.
//!
//! Every output carries a [`RunManifest`]: JSON outputs embed it under the
//! `manifest` key, SVG outputs in `<metadata>`, and CSV files written with
//! `--out` get a `<out>.manifest.json` sidecar.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::ensemble::{matrix_heatmap_with, random_ep_hamiltonian, run_experiment, EnsembleConfig, Histogram};
use crate::error::{Error, Result};
use crate::estimator::{estimate_xi, EstimateConfig, DEFAULT_KICK, DEFAULT_KICK_SEED, DEFAULT_TAU};
use crate::hatano::{sweep_csv, rigidity_sweep, log_grid, SweepRow, HatanoParams};
use crate::jordan::{EpSpec, DEFAULT_TOL_NILP};
use crate::linalg::{c64, eig_full, CMatrix, DEFAULT_TOL_EIG};
use crate::modes::{analyze_modes, modes_csv};
use crate::response::ResponseReport;
use crate::svg::{self, Series};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "epxi", version, about = "Exceptional-point response analysis")]
pub struct Cli {
    /// Seed for randomized subcommands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// ξ by both formulas, asymptotic predictions and bounds for an EP matrix.
    Exact(ExactArgs),
    /// Eigenvalues, phase rigidities and Petermann factors of a matrix.
    Modes(SourceArgs),
    /// Exact and predicted rigidity of the asymmetric hopping chain.
    Hatano(HatanoArgs),
    /// Estimate ξ of an EP hidden in a larger matrix.
    Estimate(EstimateArgs),
    /// Monte Carlo run of the estimator on random embedded EPs.
    Randexp(RandexpArgs),
    /// Grayscale heat map of |H_ij|.
    Matshow(SourceArgs),
    /// Eigenvalue table or scatter plot.
    Eigs(SourceArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Exact(_) => "exact",
            Command::Modes(_) => "modes",
            Command::Hatano(_) => "hatano",
            Command::Estimate(_) => "estimate",
            Command::Randexp(_) => "randexp",
            Command::Matshow(_) => "matshow",
            Command::Eigs(_) => "eigs",
        }
    }
}

fn parse_complex(s: &str) -> std::result::Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}"));
    let z = match parts.as_slice() {
        [re] => c64(num(re)?, 0.0),
        [re, im] => c64(num(re)?, num(im)?),
        _ => return Err(format!("expected RE,IM, got {s:?}")),
    };
    if z.is_finite() {
        Ok(z)
    } else {
        Err(format!("non-finite complex number {s:?}"))
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ExactArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// EP eigenvalue as RE,IM.
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    #[serde(with = "crate::serde_complex")]
    pub eep: Complex64,
    #[arg(long)]
    pub order: usize,
    /// Detunings |E − E_EP| for the prediction table.
    #[arg(long, value_delimiter = ',')]
    pub detunings: Vec<f64>,
    /// Perturbation strength for the bounds.
    #[arg(long, requires = "norm_h1")]
    pub eps: Option<f64>,
    /// Spectral norm of the perturbation for the bounds.
    #[arg(long, requires = "eps")]
    pub norm_h1: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOL_NILP)]
    pub tol_nilp: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct SourceArgs {
    /// Matrix file `{"rows","cols","data":[[re,im],...]}`.
    #[arg(long, conflicts_with = "sample")]
    pub matrix: Option<PathBuf>,
    /// Use realization INDEX of the random ensemble (seeded by --seed).
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true, default_value = "0,-0.05")]
    #[serde(with = "crate::serde_complex")]
    pub eep: Complex64,
    /// Ensemble sample before or after the unitary conjugation.
    #[arg(long, value_enum, default_value_t = Stage::Conjugated)]
    pub stage: Stage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Block,
    Conjugated,
}

#[derive(Args, Debug, Serialize)]
pub struct HatanoArgs {
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true, default_value = "1,0")]
    #[serde(with = "crate::serde_complex")]
    pub a: Complex64,
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true, default_value = "0,0")]
    #[serde(with = "crate::serde_complex")]
    pub e0: Complex64,
    #[arg(long, default_value_t = 1e-10)]
    pub eps_min: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub eps_max: f64,
    #[arg(long, default_value_t = 40)]
    pub points: usize,
    /// Add the closed-form |⟨L|R⟩| columns.
    #[arg(long)]
    pub with_overlap: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    #[serde(with = "crate::serde_complex")]
    pub eep: Complex64,
    #[arg(long)]
    pub order: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Fallback perturbation size relative to ‖H‖.
    #[arg(long, default_value_t = DEFAULT_KICK)]
    pub kick: f64,
    /// Also report the mean over the n candidates nearest E_EP.
    #[arg(long)]
    pub average_ring: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct RandexpArgs {
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true, default_value = "0,-0.05")]
    #[serde(with = "crate::serde_complex")]
    pub eep: Complex64,
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Worker threads; does not affect the results.
    #[arg(long)]
    #[serde(skip)]
    pub workers: Option<usize>,
    /// Also write the histogram as CSV.
    #[arg(long)]
    #[serde(skip)]
    pub hist_csv: Option<PathBuf>,
    /// Also write the histogram as SVG.
    #[arg(long)]
    #[serde(skip)]
    pub svg: Option<PathBuf>,
}

/// Reproducibility record attached to every output.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub inputs: Vec<InputDigest>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }
}

const DEFAULT_SEED: u64 = 0;

struct Ctx {
    inputs: Vec<InputDigest>,
}

impl Ctx {
    fn read_matrix(&mut self, path: &Path) -> Result<CMatrix> {
        let bytes = fs::read(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        CMatrix::from_json(text)
    }
}

/// Finished output of one subcommand.
struct Output {
    format: Format,
    body: Body,
    extra: Vec<(PathBuf, Format, Body)>,
}

enum Body {
    Json(Value),
    Text(String),
    /// SVG rendered once the manifest is known.
    Svg(Box<dyn Fn(&str) -> String>),
}

fn pick(cmd: &str, requested: Option<Format>, default: Format, allowed: &[Format]) -> Result<Format> {
    let f = requested.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Error::InvalidInput(format!("{cmd} does not support --format {f:?}")))
    }
}

fn with_manifest<T: Serialize>(value: &T) -> Value {
    match serde_json::to_value(value).expect("report serializes") {
        Value::Object(map) => Value::Object(map),
        other => json!({ "result": other }),
    }
}

fn source_matrix(ctx: &mut Ctx, args: &SourceArgs, seed: u64) -> Result<CMatrix> {
    match (&args.matrix, args.sample) {
        (Some(path), None) => ctx.read_matrix(path),
        (None, Some(index)) => {
            let cfg = EnsembleConfig::new(args.m, args.n, args.eep, index + 1, seed);
            let s = random_ep_hamiltonian(&cfg, index)?;
            Ok(match args.stage {
                Stage::Block => s.block,
                Stage::Conjugated => s.h,
            })
        }
        _ => Err(Error::InvalidInput("give exactly one of --matrix or --sample".into())),
    }
}

fn json_table(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                json_table(&key, x, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                json_table(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::String(s) => writeln!(out, "{prefix},{s}").unwrap(),
        other => writeln!(out, "{prefix},{other}").unwrap(),
    }
}

fn cmd_exact(ctx: &mut Ctx, a: &ExactArgs, format: Option<Format>) -> Result<Output> {
    let format = pick("exact", format, Format::Json, &[Format::Json, Format::Csv])?;
    let h = ctx.read_matrix(&a.matrix)?;
    let ep = EpSpec::with_tolerance(h, a.eep, a.order, a.tol_nilp)?;
    let report = ResponseReport::build(&ep, &a.detunings, a.eps.zip(a.norm_h1))?;
    let value = with_manifest(&report);
    let body = match format {
        Format::Json => Body::Json(value),
        _ => {
            let mut t = String::from("quantity,value\n");
            json_table("", &value, &mut t);
            Body::Text(t)
        }
    };
    Ok(Output { format, body, extra: vec![] })
}

fn cmd_modes(ctx: &mut Ctx, a: &SourceArgs, format: Option<Format>, seed: u64) -> Result<Output> {
    let format = pick("modes", format, Format::Csv, &[Format::Json, Format::Csv])?;
    let modes = analyze_modes(&source_matrix(ctx, a, seed)?)?;
    let body = match format {
        Format::Json => Body::Json(json!({ "modes": modes })),
        _ => Body::Text(modes_csv(&modes)),
    };
    Ok(Output { format, body, extra: vec![] })
}

fn cmd_hatano(a: &HatanoArgs, format: Option<Format>) -> Result<Output> {
    let format = pick("hatano", format, Format::Csv, &[Format::Json, Format::Csv, Format::Svg])?;
    if !(a.eps_min > 0.0 && a.eps_max >= a.eps_min) || a.points == 0 {
        return Err(Error::InvalidInput("need 0 < eps-min <= eps-max and points >= 1".into()));
    }
    let params = HatanoParams::new(a.n, a.e0, a.a, log_grid(a.eps_min, a.eps_max, a.points))?;
    let rows = rigidity_sweep(&params)?;
    let body = match format {
        Format::Json => Body::Json(json!({ "xi": params.xi(), "rows": rows })),
        Format::Csv => Body::Text(sweep_csv(&rows, a.with_overlap)),
        Format::Svg => {
            let with_overlap = a.with_overlap;
            Body::Svg(Box::new(move |meta| hatano_svg(&rows, with_overlap, meta)))
        }
    };
    Ok(Output { format, body, extra: vec![] })
}

fn hatano_svg(rows: &[SweepRow], with_overlap: bool, meta: &str) -> String {
    let pts = |f: fn(&SweepRow) -> f64| rows.iter().map(|r| (r.eps, f(r))).collect::<Vec<_>>();
    let mut series = vec![
        Series { label: "r exact", color: "#1f4e9c", dashed: false, points: pts(|r| r.r_exact) },
        Series { label: "r predicted", color: "#1f4e9c", dashed: true, points: pts(|r| r.r_pred) },
        Series { label: "K exact", color: "#b2182b", dashed: false, points: pts(|r| r.k_exact) },
        Series { label: "K predicted", color: "#b2182b", dashed: true, points: pts(|r| r.k_pred) },
    ];
    if with_overlap {
        series.push(Series { label: "r overlap", color: "#4d9221", dashed: false, points: pts(|r| r.r_overlap) });
    }
    svg::loglog(&series, "log10 eps", "log10 r, log10 K", Some(meta))
}

fn cmd_estimate(ctx: &mut Ctx, a: &EstimateArgs, format: Option<Format>, seed: Option<u64>) -> Result<Output> {
    let format = pick("estimate", format, Format::Json, &[Format::Json])?;
    let h = ctx.read_matrix(&a.matrix)?;
    let cfg = EstimateConfig {
        tau: a.tau,
        degenerate_kick: a.kick,
        kick_seed: seed.unwrap_or(DEFAULT_KICK_SEED),
        average_ring: a.average_ring,
        ..EstimateConfig::new(a.eep, a.order)
    };
    let report = estimate_xi(&h, &cfg)?;
    Ok(Output { format, body: Body::Json(with_manifest(&report)), extra: vec![] })
}

fn histogram_svg(h: &Histogram) -> Box<dyn Fn(&str) -> String> {
    let points: Vec<(f64, f64)> = h
        .density
        .iter()
        .enumerate()
        .map(|(k, &d)| ((h.edges[k] * h.edges[k + 1]).sqrt(), d))
        .collect();
    Box::new(move |meta| {
        svg::loglog(
            &[Series { label: "density", color: "black", dashed: false, points: points.clone() }],
            "log10 relative error",
            "log10 probability density",
            Some(meta),
        )
    })
}

fn cmd_randexp(a: &RandexpArgs, format: Option<Format>, seed: u64) -> Result<Output> {
    let format = pick("randexp", format, Format::Json, &[Format::Json, Format::Csv, Format::Svg])?;
    let mut cfg = EnsembleConfig::new(a.m, a.n, a.eep, a.count, seed);
    cfg.tau = a.tau;
    cfg.workers = a.workers;
    let report = run_experiment(&cfg)?;
    let body = match format {
        Format::Json => Body::Json(with_manifest(&report)),
        Format::Csv => Body::Text(report.histogram.to_csv()),
        Format::Svg => Body::Svg(histogram_svg(&report.histogram)),
    };
    let mut extra = Vec::new();
    if let Some(p) = &a.hist_csv {
        extra.push((p.clone(), Format::Csv, Body::Text(report.histogram.to_csv())));
    }
    if let Some(p) = &a.svg {
        extra.push((p.clone(), Format::Svg, Body::Svg(histogram_svg(&report.histogram))));
    }
    Ok(Output { format, body, extra })
}

fn cmd_matshow(ctx: &mut Ctx, a: &SourceArgs, format: Option<Format>, seed: u64) -> Result<Output> {
    let format = pick("matshow", format, Format::Svg, &[Format::Json, Format::Svg])?;
    let h = source_matrix(ctx, a, seed)?;
    let body = match format {
        // readable back as a matrix file
        Format::Json => Body::Json(with_manifest(&h)),
        _ => Body::Svg(Box::new(move |meta| matrix_heatmap_with(&h, Some(meta)))),
    };
    Ok(Output { format, body, extra: vec![] })
}

fn cmd_eigs(ctx: &mut Ctx, a: &SourceArgs, format: Option<Format>, seed: u64) -> Result<Output> {
    let format = pick("eigs", format, Format::Csv, &[Format::Json, Format::Csv, Format::Svg])?;
    let sys = eig_full(&source_matrix(ctx, a, seed)?, DEFAULT_TOL_EIG)?;
    let body = match format {
        Format::Json => Body::Json(json!({
            "eigenvalues": sys.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()
        })),
        Format::Csv => {
            let mut t = String::from("l,Re(E),Im(E)\n");
            for (l, z) in sys.eigenvalues.iter().enumerate() {
                writeln!(t, "{l},{:e},{:e}", z.re, z.im).unwrap();
            }
            Body::Text(t)
        }
        Format::Svg => {
            let pts: Vec<(f64, f64)> = sys.eigenvalues.iter().map(|z| (z.re, z.im)).collect();
            Body::Svg(Box::new(move |meta| svg::scatter(&pts, "Re E", "Im E", Some(meta))))
        }
    };
    Ok(Output { format, body, extra: vec![] })
}

fn render(body: &Body, manifest: &RunManifest) -> String {
    match body {
        Body::Json(Value::Object(map)) => {
            let mut map: Map<String, Value> = map.clone();
            map.insert("manifest".into(), serde_json::to_value(manifest).expect("manifest serializes"));
            let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("json");
            s.push('\n');
            s
        }
        Body::Json(other) => {
            let mut s = serde_json::to_string_pretty(other).expect("json");
            s.push('\n');
            s
        }
        Body::Text(t) => t.clone(),
        Body::Svg(f) => f(&manifest.to_json()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Internal(format!("writing {}: {e}", path.display())))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn emit(path: &Path, format: Format, body: &Body, manifest: &RunManifest) -> Result<()> {
    write_file(path, &render(body, manifest))?;
    if format == Format::Csv {
        let mut m = serde_json::to_string_pretty(manifest).expect("json");
        m.push('\n');
        write_file(&sidecar(path), &m)?;
    }
    Ok(())
}

/// Runs one parsed invocation; the primary output goes to `--out` or is returned.
pub fn run(cli: &Cli) -> Result<Option<String>> {
    let mut ctx = Ctx { inputs: Vec::new() };
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let (output, config, used_seed) = match &cli.command {
        Command::Exact(a) => (cmd_exact(&mut ctx, a, cli.format)?, to_value(a), None),
        Command::Modes(a) => {
            let s = a.sample.map(|_| seed);
            (cmd_modes(&mut ctx, a, cli.format, seed)?, to_value(a), s)
        }
        Command::Hatano(a) => (cmd_hatano(a, cli.format)?, to_value(a), None),
        Command::Estimate(a) => (
            cmd_estimate(&mut ctx, a, cli.format, cli.seed)?,
            to_value(a),
            Some(cli.seed.unwrap_or(DEFAULT_KICK_SEED)),
        ),
        Command::Randexp(a) => (cmd_randexp(a, cli.format, seed)?, to_value(a), Some(seed)),
        Command::Matshow(a) => {
            let s = a.sample.map(|_| seed);
            (cmd_matshow(&mut ctx, a, cli.format, seed)?, to_value(a), s)
        }
        Command::Eigs(a) => {
            let s = a.sample.map(|_| seed);
            (cmd_eigs(&mut ctx, a, cli.format, seed)?, to_value(a), s)
        }
    };
    let mut config = config;
    if let Value::Object(map) = &mut config {
        map.insert("format".into(), serde_json::to_value(output.format).expect("json"));
    }
    let manifest = RunManifest {
        subcommand: cli.command.name().to_string(),
        config,
        seed: used_seed,
        tool_version: VERSION.to_string(),
        inputs: ctx.inputs,
    };
    for (path, format, body) in &output.extra {
        emit(path, *format, body, &manifest)?;
    }
    match &cli.out {
        Some(path) => {
            emit(path, output.format, &output.body, &manifest)?;
            Ok(None)
        }
        None => Ok(Some(render(&output.body, &manifest))),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("arguments serialize")
}

/// 2 for bad input or a matrix that is not an EP, 3 for numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::NotAnEp { .. } | Error::DivergesAtEp => 2,
        _ => 3,
    }
}

pub fn error_json(e: &Error) -> String {
    let mut v = json!({ "error": e.kind(), "message": e.to_string() });
    if let Error::NotAnEp { order, norms } = e {
        v["order"] = json!(order);
        v["norms"] = json!(norms);
    }
    v.to_string()
}

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = Error::InvalidInput(e.render().to_string().trim().to_string());
            eprintln!("{}", error_json(&err));
            return 2;
        }
    };
    match run(&cli) {
        Ok(Some(text)) => {
            print!("{text}");
            0
        }
        Ok(None) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}
