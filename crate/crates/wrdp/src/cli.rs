//! Command-line surface: curve sweeps, threshold tables, vector allocation
//! solving, and the Monte-Carlo simulator.
//!
//! Every subcommand accepts `--config <path>` (JSON) and/or direct flags;
//! flags override config fields. `+inf` is written as the string `"inf"` in
//! JSON and as `inf` on the command line. Each run embeds the fully
//! resolved configuration under `resolved_config` in its JSON output, and
//! outputs carry no timestamps, so reruns with the same inputs are
//! byte-identical. Failures print `{"error":{"kind","message"}}` on stderr
//! and exit nonzero.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::scalar::{
    common_randomness_threshold, optimal_distortion, perception_threshold, rate_threshold,
    Threshold,
};
use crate::sim::{run_trials, CodebookConfig, EstimatorConfig, DEFAULT_CODEWORD_BUDGET};
use crate::types::{ext_vec_f64, DiagGaussianSource, GaussianScalarSource, TradeoffQuery};
use crate::vector::{solve_allocation_with, universality_gap, SolverOptions};

// ---------------------------------------------------------------------------
// Serde helper: optional f64 admitting "inf"
// ---------------------------------------------------------------------------

mod ext_opt_f64 {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
        match v {
            None => ser.serialize_none(),
            Some(x) if x.is_infinite() && *x > 0.0 => ser.serialize_str("inf"),
            Some(x) => ser.serialize_f64(*x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<f64>, D::Error> {
        match Option::<serde_json::Value>::deserialize(de)? {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(serde_json::Value::String(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
            Some(serde_json::Value::Number(n)) => n
                .as_f64()
                .map(Some)
                .ok_or_else(|| D::Error::custom("number out of f64 range")),
            Some(other) => Err(D::Error::custom(format!(
                "expected a number or \"inf\", got {other}"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Argument structs
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "wrdp",
    version,
    about = "Gaussian rate-distortion-perception tradeoffs with limited common randomness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep D over an R grid for lists of C and P; writes CSV, a gnuplot
    /// script, and a JSON run document.
    Curves(CurvesArgs),
    /// Print the rate / common-randomness / perception thresholds for a
    /// fixed pair of the other two parameters.
    Thresholds(ThresholdsArgs),
    /// Solve the rate-allocation problem for a diagonal source; emits the
    /// allocation, objective, solver diagnostics, and the universality gap.
    Vector(VectorArgs),
    /// Run the random-coding simulator; emits a JSON report and appends a
    /// CSV summary row.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CurvesArgs {
    /// JSON sweep config (fields: gamma or gammas, R_grid, C_list, P_list, out)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source variance(s), comma-separated (overrides config)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    gamma: Option<Vec<f64>>,
    /// R grid as start:stop[:step] (default 0:2:0.01)
    #[arg(long = "R")]
    r: Option<String>,
    /// Common-randomness rates, comma-separated; "inf" allowed
    #[arg(long = "C", value_delimiter = ',', num_args = 1..)]
    c: Option<Vec<f64>>,
    /// Perception budgets, comma-separated; "inf" allowed
    #[arg(long = "P", value_delimiter = ',', num_args = 1..)]
    p: Option<Vec<f64>>,
    /// Output CSV path; companion .gp and .json are written beside it
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdsArgs {
    /// JSON config (fields: gamma, R, C, P, out)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source variance
    #[arg(long)]
    gamma: Option<f64>,
    /// Encoding rate (bits)
    #[arg(long = "R")]
    r: Option<f64>,
    /// Common-randomness rate (bits); "inf" allowed
    #[arg(long = "C")]
    c: Option<f64>,
    /// Perception budget; "inf" allowed
    #[arg(long = "P")]
    p: Option<f64>,
    /// Optional JSON report path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VectorArgs {
    /// JSON config (fields: gammas, R, C, P, solver, out)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source spectrum, comma-separated (overrides config)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    gamma: Option<Vec<f64>>,
    /// Encoding rate (bits)
    #[arg(long = "R")]
    r: Option<f64>,
    /// Common-randomness rate (bits); "inf" allowed
    #[arg(long = "C")]
    c: Option<f64>,
    /// Perception budget; "inf" allowed
    #[arg(long = "P")]
    p: Option<f64>,
    /// Output JSON path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config (fields: n, R, C, gamma, seed, codeword_budget, P,
    /// trials, estimator, out)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source variance
    #[arg(long)]
    gamma: Option<f64>,
    /// Encoding rate (bits)
    #[arg(long = "R")]
    r: Option<f64>,
    /// Common-randomness rate (bits)
    #[arg(long = "C")]
    c: Option<f64>,
    /// Per-symbol perception budget; "inf" allowed
    #[arg(long = "P")]
    p: Option<f64>,
    /// Blocklength
    #[arg(long)]
    n: Option<usize>,
    /// Number of source blocks to simulate
    #[arg(long)]
    trials: Option<u64>,
    /// Root seed
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on the total codeword count
    #[arg(long)]
    codeword_budget: Option<u64>,
    /// Output JSON path (stdout when omitted); the CSV row is appended to
    /// the sibling .csv path
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Sweep spec
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RGrid {
    pub start: f64,
    pub stop: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    0.01
}

impl Default for RGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 2.0,
            step: default_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(rename = "R_grid", default)]
    pub r_grid: RGrid,
    #[serde(rename = "C_list", with = "ext_vec_f64", default = "default_c_list")]
    pub c_list: Vec<f64>,
    #[serde(rename = "P_list", with = "ext_vec_f64", default = "default_p_list")]
    pub p_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_c_list() -> Vec<f64> {
    vec![0.0, 1.0, f64::INFINITY]
}

fn default_p_list() -> Vec<f64> {
    vec![0.1]
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            gamma: None,
            gammas: None,
            r_grid: RGrid::default(),
            c_list: default_c_list(),
            p_list: default_p_list(),
            out: None,
        }
    }
}

/// Parses `start:stop[:step]` or a single number (degenerate grid).
fn parse_grid(text: &str) -> Result<RGrid> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| Error::InvalidConfig {
            what: format!("cannot parse `{s}` as a number in R grid `{text}`"),
        })
    };
    match parts.as_slice() {
        [single] => {
            let v = num(single)?;
            Ok(RGrid {
                start: v,
                stop: v,
                step: default_step(),
            })
        }
        [start, stop] => Ok(RGrid {
            start: num(start)?,
            stop: num(stop)?,
            step: default_step(),
        }),
        [start, stop, step] => Ok(RGrid {
            start: num(start)?,
            stop: num(stop)?,
            step: num(step)?,
        }),
        _ => Err(Error::InvalidConfig {
            what: format!("R grid `{text}` must be start:stop[:step] or a single number"),
        }),
    }
}

fn grid_points(grid: &RGrid) -> Vec<f64> {
    let count = ((grid.stop - grid.start) / grid.step + 1e-9).floor() as usize;
    (0..=count)
        .map(|i| {
            let r = grid.start + i as f64 * grid.step;
            // Snap accumulated fp noise so grid values print cleanly.
            if grid.step >= 1e-6 {
                (r * 1e9).round() / 1e9
            } else {
                r
            }
        })
        .collect()
}

fn resolve_sweep(args: &CurvesArgs) -> Result<SweepSpec> {
    let mut spec: SweepSpec = load_spec(&args.config)?;
    if let Some(g) = &args.gamma {
        if g.len() == 1 {
            spec.gamma = Some(g[0]);
            spec.gammas = None;
        } else {
            spec.gammas = Some(g.clone());
            spec.gamma = None;
        }
    }
    if let Some(text) = &args.r {
        spec.r_grid = parse_grid(text)?;
    }
    if let Some(c) = &args.c {
        spec.c_list = c.clone();
    }
    if let Some(p) = &args.p {
        spec.p_list = p.clone();
    }
    if let Some(out) = &args.out {
        spec.out = Some(out.clone());
    }
    if spec.out.is_none() {
        spec.out = Some(PathBuf::from("curves.csv"));
    }
    if spec.gamma.is_some() && spec.gammas.is_some() {
        return Err(Error::InvalidConfig {
            what: "set either `gamma` or `gammas`, not both".into(),
        });
    }
    if spec.gamma.is_none() && spec.gammas.is_none() {
        spec.gamma = Some(1.0);
    }
    let g = &spec.r_grid;
    if !(g.start.is_finite() && g.stop.is_finite() && g.step.is_finite()) {
        return Err(Error::InvalidConfig {
            what: format!("R grid bounds must be finite, got {g:?}"),
        });
    }
    if g.step <= 0.0 {
        return Err(Error::InvalidConfig {
            what: format!("R grid step must be positive, got {}", g.step),
        });
    }
    if g.start > g.stop {
        return Err(Error::InvalidConfig {
            what: format!("R grid start {} exceeds stop {}", g.start, g.stop),
        });
    }
    if spec.c_list.is_empty() {
        return Err(Error::EmptyInput { name: "C_list" });
    }
    if spec.p_list.is_empty() {
        return Err(Error::EmptyInput { name: "P_list" });
    }
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

fn load_spec<T: DeserializeOwned + Default>(config: &Option<PathBuf>) -> Result<T> {
    match config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(T::default()),
    }
}

/// Locale-independent number formatting; `+inf` prints as `inf`.
fn fmt_ext(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn append_csv_row(path: &Path, header: &str, row: &str) -> Result<()> {
    let need_header = match fs::metadata(path) {
        Ok(meta) => meta.len() == 0,
        Err(_) => true,
    };
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if need_header {
        writeln!(file, "{header}")?;
    }
    writeln!(file, "{row}")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CurvesReport<'a> {
    resolved_config: &'a SweepSpec,
    csv: String,
    plot_script: String,
    rows: usize,
}

fn cmd_curves(args: &CurvesArgs) -> Result<()> {
    let spec = resolve_sweep(args)?;
    let out = spec.out.clone().expect("out resolved above");

    enum Model {
        Scalar(GaussianScalarSource),
        Diagonal(DiagGaussianSource),
    }
    let model = match (&spec.gamma, &spec.gammas) {
        (Some(g), None) => Model::Scalar(GaussianScalarSource::new(*g)?),
        (None, Some(gs)) => Model::Diagonal(DiagGaussianSource::new(gs.clone())?),
        _ => unreachable!("resolve_sweep normalizes the source"),
    };

    let points = grid_points(&spec.r_grid);
    let mut csv = String::from("R,C,P,D\n");
    let mut rows = 0usize;
    for &c in &spec.c_list {
        for &p in &spec.p_list {
            for &r in &points {
                let q = TradeoffQuery::new(r, c, p)?;
                let d = match &model {
                    Model::Scalar(src) => optimal_distortion(src, &q)?.distortion,
                    Model::Diagonal(src) => {
                        solve_allocation_with(src, &q, &SolverOptions::default())?.objective
                    }
                };
                let _ = writeln!(csv, "{},{},{},{}", fmt_ext(r), fmt_ext(c), fmt_ext(p), d);
                rows += 1;
            }
        }
    }
    fs::write(&out, &csv)?;

    let gp_path = out.with_extension("gp");
    let csv_name = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| out.display().to_string());
    let mut script = String::new();
    let _ = writeln!(script, "# Distortion-rate curves; run: gnuplot -p {}", gp_path.display());
    let _ = writeln!(script, "set datafile separator \",\"");
    let _ = writeln!(script, "set xlabel \"R (bits)\"");
    let _ = writeln!(script, "set ylabel \"D\"");
    let _ = writeln!(script, "set key top right");
    let _ = writeln!(script, "plot \\");
    let mut clauses = Vec::new();
    for &c in &spec.c_list {
        for &p in &spec.p_list {
            let cond_c = if c.is_infinite() {
                "$2 > 1e300".to_string()
            } else {
                format!("abs($2 - {c}) < 1e-9")
            };
            let cond_p = if p.is_infinite() {
                "$3 > 1e300".to_string()
            } else {
                format!("abs($3 - {p}) < 1e-9")
            };
            clauses.push(format!(
                "  \"{}\" every ::1 using 1:(({} && {}) ? $4 : 1/0) with lines title \"C={}, P={}\"",
                csv_name,
                cond_c,
                cond_p,
                fmt_ext(c),
                fmt_ext(p)
            ));
        }
    }
    script.push_str(&clauses.join(", \\\n"));
    script.push('\n');
    fs::write(&gp_path, &script)?;

    let json_path = out.with_extension("json");
    let report = CurvesReport {
        resolved_config: &spec,
        csv: csv_name.clone(),
        plot_script: gp_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| gp_path.display().to_string()),
        rows,
    };
    write_json(&json_path, &report)?;

    println!(
        "wrote {} ({rows} rows), {}, {}",
        out.display(),
        gp_path.display(),
        json_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// thresholds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ThresholdSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(
        default,
        rename = "C",
        with = "ext_opt_f64",
        skip_serializing_if = "Option::is_none"
    )]
    pub c: Option<f64>,
    #[serde(
        default,
        rename = "P",
        with = "ext_opt_f64",
        skip_serializing_if = "Option::is_none"
    )]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ThresholdReport {
    resolved_config: ThresholdSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_threshold: Option<Threshold>,
    #[serde(skip_serializing_if = "Option::is_none")]
    common_randomness_threshold: Option<Threshold>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perception_threshold: Option<f64>,
}

fn fmt_threshold(t: &Threshold) -> String {
    match t {
        Threshold::Infinite => "none".to_string(),
        other => format!("{:.6}", other.value().expect("finite threshold")),
    }
}

fn cmd_thresholds(args: &ThresholdsArgs) -> Result<()> {
    let mut spec: ThresholdSpec = load_spec(&args.config)?;
    if args.gamma.is_some() {
        spec.gamma = args.gamma;
    }
    if args.r.is_some() {
        spec.r = args.r;
    }
    if args.c.is_some() {
        spec.c = args.c;
    }
    if args.p.is_some() {
        spec.p = args.p;
    }
    if let Some(out) = &args.out {
        spec.out = Some(out.clone());
    }
    let gamma = spec.gamma.unwrap_or(1.0);
    spec.gamma = Some(gamma);
    let src = GaussianScalarSource::new(gamma)?;

    let rate_t = match (spec.c, spec.p) {
        (Some(c), Some(p)) => Some(rate_threshold(&src, c, p)?),
        _ => None,
    };
    let c_t = match (spec.r, spec.p) {
        (Some(r), Some(p)) => Some(common_randomness_threshold(&src, r, p)?),
        _ => None,
    };
    let p_t = match (spec.r, spec.c) {
        (Some(r), Some(c)) => Some(perception_threshold(&src, r, c)?),
        _ => None,
    };
    if rate_t.is_none() && c_t.is_none() && p_t.is_none() {
        return Err(Error::InvalidConfig {
            what: "thresholds needs at least two of R, C, P (flags or config)".into(),
        });
    }

    println!("{:<14} {:<22} value", "threshold", "fixed");
    if let Some(t) = &rate_t {
        let fixed = format!(
            "C={}, P={}",
            fmt_ext(spec.c.expect("checked")),
            fmt_ext(spec.p.expect("checked"))
        );
        println!("{:<14} {:<22} {}", "R-threshold", fixed, fmt_threshold(t));
    }
    if let Some(t) = &c_t {
        let fixed = format!(
            "R={}, P={}",
            fmt_ext(spec.r.expect("checked")),
            fmt_ext(spec.p.expect("checked"))
        );
        println!("{:<14} {:<22} {}", "C-threshold", fixed, fmt_threshold(t));
    }
    if let Some(v) = p_t {
        let fixed = format!(
            "R={}, C={}",
            fmt_ext(spec.r.expect("checked")),
            fmt_ext(spec.c.expect("checked"))
        );
        println!("{:<14} {:<22} {:.6}", "P-threshold", fixed, v);
    }

    if let Some(out) = spec.out.clone() {
        let report = ThresholdReport {
            resolved_config: spec,
            rate_threshold: rate_t,
            common_randomness_threshold: c_t,
            perception_threshold: p_t,
        };
        write_json(&out, &report)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// vector
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct VectorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(
        default,
        rename = "C",
        with = "ext_opt_f64",
        skip_serializing_if = "Option::is_none"
    )]
    pub c: Option<f64>,
    #[serde(
        default,
        rename = "P",
        with = "ext_opt_f64",
        skip_serializing_if = "Option::is_none"
    )]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn missing(field: &str, flag: &str) -> Error {
    Error::InvalidConfig {
        what: format!("missing `{field}` (set it in the config or via {flag})"),
    }
}

fn cmd_vector(args: &VectorArgs) -> Result<()> {
    let mut spec: VectorSpec = load_spec(&args.config)?;
    if let Some(g) = &args.gamma {
        spec.gammas = Some(g.clone());
    }
    if args.r.is_some() {
        spec.r = args.r;
    }
    if args.c.is_some() {
        spec.c = args.c;
    }
    if args.p.is_some() {
        spec.p = args.p;
    }
    if let Some(out) = &args.out {
        spec.out = Some(out.clone());
    }
    let gammas = spec.gammas.clone().ok_or_else(|| missing("gammas", "--gamma"))?;
    let r = spec.r.ok_or_else(|| missing("R", "--R"))?;
    let c = spec.c.ok_or_else(|| missing("C", "--C"))?;
    let p = spec.p.ok_or_else(|| missing("P", "--P"))?;
    let solver = spec.solver.unwrap_or_default();
    spec.solver = Some(solver);

    let src = DiagGaussianSource::new(gammas)?;
    let q = TradeoffQuery::new(r, c, p)?;
    let solution = solve_allocation_with(&src, &q, &solver)?;
    let gap = universality_gap(&src, r, c)?;

    #[derive(Serialize)]
    struct VectorReport<'a> {
        resolved_config: &'a VectorSpec,
        #[serde(flatten)]
        solution: &'a crate::vector::AllocationSolution,
        universality_gap: &'a crate::vector::UniversalityGap,
    }
    let report = VectorReport {
        resolved_config: &spec,
        solution: &solution,
        universality_gap: &gap,
    };
    match &spec.out {
        Some(out) => {
            write_json(out, &report)?;
            println!("wrote {}", out.display());
        }
        None => {
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            print!("{text}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimulateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codeword_budget: Option<u64>,
    #[serde(
        default,
        rename = "P",
        with = "ext_opt_f64",
        skip_serializing_if = "Option::is_none"
    )]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

const SIM_CSV_HEADER: &str = "n,R,C,P,trials,emp_D,emp_D_se,emp_W2,gap,reference,seed";

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut spec: SimulateSpec = load_spec(&args.config)?;
    if args.n.is_some() {
        spec.n = args.n;
    }
    if args.r.is_some() {
        spec.r = args.r;
    }
    if args.c.is_some() {
        spec.c = args.c;
    }
    if args.gamma.is_some() {
        spec.gamma = args.gamma;
    }
    if args.p.is_some() {
        spec.p = args.p;
    }
    if args.trials.is_some() {
        spec.trials = args.trials;
    }
    if args.seed.is_some() {
        spec.seed = args.seed;
    }
    if args.codeword_budget.is_some() {
        spec.codeword_budget = args.codeword_budget;
    }
    if let Some(out) = &args.out {
        spec.out = Some(out.clone());
    }

    let n = spec.n.ok_or_else(|| missing("n", "--n"))?;
    let r = spec.r.ok_or_else(|| missing("R", "--R"))?;
    let p = spec.p.ok_or_else(|| missing("P", "--P"))?;
    let trials = spec.trials.ok_or_else(|| missing("trials", "--trials"))?;
    let c = spec.c.unwrap_or(0.0);
    let gamma = spec.gamma.unwrap_or(1.0);
    let seed = spec.seed.unwrap_or(0);
    let budget = spec.codeword_budget.unwrap_or(DEFAULT_CODEWORD_BUDGET);
    let estimator = spec.estimator.unwrap_or_default();
    spec.c = Some(c);
    spec.gamma = Some(gamma);
    spec.seed = Some(seed);
    spec.codeword_budget = Some(budget);
    spec.estimator = Some(estimator);

    let cfg = CodebookConfig {
        n,
        rate: r,
        common_randomness: c,
        gamma,
        seed,
        codeword_budget: budget,
    };
    let result = run_trials(&cfg, p, trials, &estimator)?;

    #[derive(Serialize)]
    struct SimulateReport<'a> {
        resolved_config: &'a SimulateSpec,
        result: &'a crate::sim::SimulationResult,
    }
    let report = SimulateReport {
        resolved_config: &spec,
        result: &result,
    };

    let row = format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        n,
        fmt_ext(r),
        fmt_ext(c),
        fmt_ext(p),
        trials,
        result.empirical_distortion,
        result.empirical_distortion_se,
        result.empirical_w2_per_symbol,
        result.soft_covering_gap,
        result.reference,
        seed
    );
    match &spec.out {
        Some(out) => {
            write_json(out, &report)?;
            let csv_path = out.with_extension("csv");
            append_csv_row(&csv_path, SIM_CSV_HEADER, &row)?;
            println!("wrote {}; appended row to {}", out.display(), csv_path.display());
        }
        None => {
            append_csv_row(Path::new("simulation.csv"), SIM_CSV_HEADER, &row)?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            print!("{text}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn dispatch(cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::Curves(args) => cmd_curves(args),
        Cmd::Thresholds(args) => cmd_thresholds(args),
        Cmd::Vector(args) => cmd_vector(args),
        Cmd::Simulate(args) => cmd_simulate(args),
    }
}

/// Runs the CLI; returns the process exit code (0 iff success).
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let obj = json!({"error": {"kind": "usage", "message": e.to_string()}});
            eprintln!("{obj}");
            return 2;
        }
    };
    match dispatch(&cli.cmd) {
        Ok(()) => 0,
        Err(err) => {
            let obj = json!({"error": {"kind": err.kind(), "message": err.to_string()}});
            eprintln!("{obj}");
            1
        }
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing_forms() {
        assert_eq!(
            parse_grid("0:2:0.01").unwrap(),
            RGrid {
                start: 0.0,
                stop: 2.0,
                step: 0.01
            }
        );
        assert_eq!(
            parse_grid("0.5:1.5").unwrap(),
            RGrid {
                start: 0.5,
                stop: 1.5,
                step: 0.01
            }
        );
        let single = parse_grid("0.75").unwrap();
        assert_eq!((single.start, single.stop), (0.75, 0.75));
        assert!(parse_grid("a:b").is_err());
        assert!(parse_grid("0:1:2:3").is_err());
    }

    #[test]
    fn grid_points_cover_range_inclusively() {
        let pts = grid_points(&RGrid {
            start: 0.0,
            stop: 2.0,
            step: 0.01,
        });
        assert_eq!(pts.len(), 201);
        assert_eq!(pts[0], 0.0);
        assert_eq!(*pts.last().unwrap(), 2.0);
        assert_eq!(pts[27], 0.27, "grid values must snap to clean decimals");
        let one = grid_points(&RGrid {
            start: 1.0,
            stop: 1.0,
            step: 0.01,
        });
        assert_eq!(one, vec![1.0]);
    }

    #[test]
    fn ext_formatting() {
        assert_eq!(fmt_ext(f64::INFINITY), "inf");
        assert_eq!(fmt_ext(0.1), "0.1");
        assert_eq!(fmt_ext(2.0), "2");
    }

    #[test]
    fn sweep_spec_json_accepts_inf_strings() {
        let spec: SweepSpec = serde_json::from_str(
            r#"{"gamma": 1.0, "R_grid": {"start": 0, "stop": 1},
                "C_list": [0, 1, "inf"], "P_list": ["inf", 0.1]}"#,
        )
        .unwrap();
        assert_eq!(spec.r_grid.step, 0.01, "step defaults to 0.01");
        assert_eq!(spec.c_list, vec![0.0, 1.0, f64::INFINITY]);
        assert_eq!(spec.p_list, vec![f64::INFINITY, 0.1]);
        let round = serde_json::to_string(&spec).unwrap();
        assert!(round.contains("\"inf\""), "inf must serialize as a string");
    }

    #[test]
    fn simulate_spec_requires_core_fields() {
        let args = SimulateArgs {
            config: None,
            gamma: Some(1.0),
            r: Some(1.0),
            c: Some(1.0),
            p: Some(0.0),
            n: None,
            trials: Some(10),
            seed: Some(1),
            codeword_budget: None,
            out: None,
        };
        let err = cmd_simulate(&args).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { .. }));
        assert!(err.to_string().contains('n'), "error names the field: {err}");
    }

    #[test]
    fn threshold_formatting_marks_none() {
        assert_eq!(fmt_threshold(&Threshold::Infinite), "none");
        assert_eq!(fmt_threshold(&Threshold::Zero), "0.000000");
        assert_eq!(fmt_threshold(&Threshold::Finite(0.25)), "0.250000");
    }
}
