//! Command-line front end for the monitoring simulator: validate and run
//! configs, sweep parameters, compare methods across seeds, and generate
//! example networks.
//!
//! Exit codes: 0 on success, 2 on config or usage errors, 3 on solver
//! failures, 1 on artifact I/O failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use patrol_core::controller::{FoCalibration, LogRecord};
use patrol_core::simulator::{generate_config, run, sweep, SimConfig, TimeSeries, Topology};
use patrol_core::transit::Method;
use patrol_core::Error;

#[derive(Parser)]
#[command(name = "patrol", version, about = "Event-driven persistent-monitoring simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and write metrics.csv, events.jsonl, meta.json
    /// (and timeseries.csv when sampling is on).
    Run(RunArgs),
    /// Run several methods on one config and tabulate the comparison.
    Compare(CompareArgs),
    /// Sweep one parameter and tabulate the first-departure diagnostics.
    Sweep(SweepArgs),
    /// Generate an example network config in canonical form.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON config.
    #[arg(long)]
    config: PathBuf,
    /// Method override: SO, FO1, FO2, FO3, SOV, SOA, FOV, FOA.
    #[arg(long)]
    method: Option<String>,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed override recorded with the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample period for timeseries.csv.
    #[arg(long)]
    sample_dt: Option<f64>,
    /// Report J_e divided by 10000 (classic comparison-table display).
    #[arg(long)]
    scale_je: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Path to a JSON config.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated method list (at least two).
    #[arg(long)]
    methods: String,
    /// Seed range `lo..hi` (inclusive): regenerate the network per seed and
    /// report per-method means. Needs a config with a generator section.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Report J_e divided by 10000 (classic comparison-table display).
    #[arg(long)]
    scale_je: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Path to a JSON config.
    #[arg(long)]
    config: PathBuf,
    /// Sweep spec `param=start:stop:steps`, e.g. `alpha=0.1:2.5:5`.
    spec: String,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Network layout: ring, grid, or random-geometric.
    #[arg(long)]
    topology: String,
    /// Number of targets (M ≥ 2).
    #[arg(long)]
    targets: usize,
    /// Number of agents (1 ≤ N < M).
    #[arg(long)]
    agents: usize,
    /// Placement seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mission box, width and height.
    #[arg(long = "box", num_args = 2, value_names = ["W", "H"], default_values_t = [600.0, 600.0])]
    bbox: Vec<f64>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Errors and exit codes.
// ---------------------------------------------------------------------------

struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> CliError {
        CliError {
            code: 2,
            msg: msg.into(),
        }
    }
    fn io(msg: impl Into<String>) -> CliError {
        CliError {
            code: 1,
            msg: msg.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        let code = match &e {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Domain(_) | Error::Infeasible(_) => 3,
            Error::Io(_) => 1,
        };
        CliError {
            code,
            msg: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

fn load_config(path: &Path) -> CliResult<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
}

fn config_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "config".to_string())
}

fn ensure_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

struct MetricsRow {
    pc: String,
    method: Method,
    j_t: f64,
    j_e: f64,
    j_s: f64,
    v_max: f64,
    u_max: f64,
}

/// The comparison-table artifact. Columns are fixed; `--scale-je` swaps the
/// raw energy column for the conventional /10000 display and says so in the
/// header. `best` marks the lowest-J_T row and appears only for comparisons.
fn write_metrics_csv(
    path: &Path,
    rows: &[MetricsRow],
    scale_je: bool,
    best: Option<usize>,
) -> CliResult<()> {
    let je_col = if scale_je { "J_e/10000" } else { "J_e" };
    let mut text = format!("pc,method,J_T,{je_col},J_s,v_max,u_max");
    if best.is_some() {
        text.push_str(",best");
    }
    text.push('\n');
    for (k, r) in rows.iter().enumerate() {
        let je = if scale_je { r.j_e / 1e4 } else { r.j_e };
        text.push_str(&format!(
            "{},{},{},{},{},{},{}",
            r.pc,
            r.method.as_str(),
            r.j_t,
            je,
            r.j_s,
            r.v_max,
            r.u_max
        ));
        if let Some(b) = best {
            text.push_str(if b == k { ",yes" } else { ",no" });
        }
        text.push('\n');
    }
    write_file(path, &text)
}

/// Line-delimited event log. The first line is a `meta` record carrying the
/// config hash so the artifact is self-identifying; every line has the same
/// {t, kind, agent, target, detail} shape.
fn write_events(
    path: &Path,
    log: &[LogRecord],
    hash: &str,
    method: Method,
    seed: u64,
) -> CliResult<()> {
    let meta = LogRecord {
        t: 0.0,
        kind: "meta".to_string(),
        agent: None,
        target: None,
        detail: serde_json::json!({
            "config_hash": hash,
            "method": method.as_str(),
            "seed": seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
        }),
    };
    let mut text = serde_json::to_string(&meta).map_err(Error::from)?;
    text.push('\n');
    for rec in log {
        text.push_str(&serde_json::to_string(rec).map_err(Error::from)?);
        text.push('\n');
    }
    write_file(path, &text)
}

fn write_timeseries(path: &Path, ts: &TimeSeries) -> CliResult<()> {
    let mut text = ts.columns.join(",");
    text.push('\n');
    for row in &ts.rows {
        let mut first = true;
        for v in row {
            if !first {
                text.push(',');
            }
            first = false;
            text.push_str(&format!("{v}"));
        }
        text.push('\n');
    }
    write_file(path, &text)
}

fn write_meta(
    path: &Path,
    cfg: &SimConfig,
    hash: &str,
    calibration: Option<&FoCalibration>,
    extra: serde_json::Value,
) -> CliResult<()> {
    let config: serde_json::Value =
        serde_json::from_str(&cfg.canonical_json()?).map_err(Error::from)?;
    let mut meta = serde_json::json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": hash,
        "method": cfg.method.method.as_str(),
        "seed": cfg.sim.seed,
        "note": cfg.note,
        "calibration": calibration,
        "config": config,
    });
    if let (Some(obj), Some(add)) = (meta.as_object_mut(), extra.as_object()) {
        for (k, v) in add {
            obj.insert(k.clone(), v.clone());
        }
    }
    let mut text = serde_json::to_string_pretty(&meta).map_err(Error::from)?;
    text.push('\n');
    write_file(path, &text)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn cmd_run(a: RunArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(m) = &a.method {
        cfg.method.method = Method::from_str(m)?;
    }
    if let Some(s) = a.seed {
        cfg.sim.seed = s;
    }
    if let Some(dt) = a.sample_dt {
        cfg.sim.sample_dt = Some(dt);
    }
    cfg.validate()?;
    ensure_out_dir(&a.out)?;

    let out = run(&cfg)?;
    let hash = cfg.config_hash()?;
    let pc = config_stem(&a.config);
    let m = &out.metrics;
    write_metrics_csv(
        &a.out.join("metrics.csv"),
        &[MetricsRow {
            pc: pc.clone(),
            method: cfg.method.method,
            j_t: m.j_t,
            j_e: m.j_e,
            j_s: m.j_s,
            v_max: m.v_max,
            u_max: m.u_max,
        }],
        a.scale_je,
        None,
    )?;
    write_events(
        &a.out.join("events.jsonl"),
        &out.log,
        &hash,
        cfg.method.method,
        cfg.sim.seed,
    )?;
    if let Some(ts) = &out.timeseries {
        write_timeseries(&a.out.join("timeseries.csv"), ts)?;
    }
    write_meta(
        &a.out.join("meta.json"),
        &cfg,
        &hash,
        out.calibration.as_ref(),
        serde_json::json!({
            "events": m.event_count,
            "solves": m.solve_count,
        }),
    )?;
    println!(
        "{pc} [{}] J_T={} J_e={} J_s={} v_max={} u_max={} -> {}",
        cfg.method.method.as_str(),
        m.j_t,
        m.j_e,
        m.j_s,
        m.v_max,
        m.u_max,
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

fn parse_seed_range(s: &str) -> CliResult<(u64, u64)> {
    let parts: Vec<&str> = s.split("..").collect();
    let err = || CliError::config(format!("seed range must be `lo..hi`, got {s:?}"));
    if parts.len() != 2 {
        return Err(err());
    }
    let lo: u64 = parts[0].parse().map_err(|_| err())?;
    let hi: u64 = parts[1].parse().map_err(|_| err())?;
    if lo > hi {
        return Err(err());
    }
    Ok((lo, hi))
}

fn cmd_compare(a: CompareArgs) -> CliResult<()> {
    let cfg = load_config(&a.config)?;
    let methods: Vec<Method> = a
        .methods
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Method::from_str)
        .collect::<Result<_, _>>()?;
    if methods.len() < 2 {
        return Err(CliError::config(format!(
            "compare needs at least two methods, got {}",
            methods.len()
        )));
    }
    for (k, m) in methods.iter().enumerate() {
        if methods[..k].contains(m) {
            return Err(CliError::config(format!(
                "method {} listed twice",
                m.as_str()
            )));
        }
    }
    cfg.validate()?;

    let seeds = a.seeds.as_deref().map(parse_seed_range).transpose()?;
    let bases: Vec<SimConfig> = match seeds {
        None => vec![cfg.clone()],
        Some((lo, hi)) => {
            let g = cfg.generator.clone().ok_or_else(|| {
                CliError::config(
                    "--seeds needs a config with a generator section (produce one with `patrol generate`)",
                )
            })?;
            (lo..=hi)
                .map(|s| generate_config(g.topology, g.m, g.n, s, g.bbox))
                .collect::<Result<_, _>>()?
        }
    };

    ensure_out_dir(&a.out)?;
    let pc = config_stem(&a.config);
    let mut rows = Vec::with_capacity(methods.len());
    for &method in &methods {
        let (mut jt, mut je, mut js, mut vm, mut um) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for base in &bases {
            let mut c = base.clone();
            c.method.method = method;
            c.validate()?;
            let m = run(&c)?.metrics;
            jt += m.j_t;
            je += m.j_e;
            js += m.j_s;
            vm += m.v_max;
            um += m.u_max;
        }
        let n = bases.len() as f64;
        rows.push(MetricsRow {
            pc: pc.clone(),
            method,
            j_t: jt / n,
            j_e: je / n,
            j_s: js / n,
            v_max: vm / n,
            u_max: um / n,
        });
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.j_t.total_cmp(&b.j_t))
        .map(|(k, _)| k)
        .expect("at least two rows");
    write_metrics_csv(&a.out.join("metrics.csv"), &rows, a.scale_je, Some(best))?;
    write_meta(
        &a.out.join("meta.json"),
        &cfg,
        &cfg.config_hash()?,
        None,
        serde_json::json!({
            "methods": methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "seeds": seeds.map(|(lo, hi)| format!("{lo}..{hi}")),
            "runs_per_method": bases.len(),
        }),
    )?;
    for (k, r) in rows.iter().enumerate() {
        println!(
            "{} J_T={}{}",
            r.method.as_str(),
            r.j_t,
            if k == best { "  <- best" } else { "" }
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn parse_sweep_spec(s: &str) -> CliResult<(String, Vec<f64>)> {
    let err = |why: &str| CliError::config(format!("sweep spec {s:?}: {why} (expected param=start:stop:steps)"));
    let (name, range) = s.split_once('=').ok_or_else(|| err("missing `=`"))?;
    if name.is_empty() {
        return Err(err("empty parameter name"));
    }
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(err("range needs exactly start:stop:steps"));
    }
    let start: f64 = parts[0].parse().map_err(|_| err("bad start"))?;
    let stop: f64 = parts[1].parse().map_err(|_| err("bad stop"))?;
    let steps: usize = parts[2].parse().map_err(|_| err("bad step count"))?;
    if !(start.is_finite() && stop.is_finite()) {
        return Err(err("range must be finite"));
    }
    if steps == 0 {
        return Err(err("steps must be at least 1"));
    }
    let values = if steps == 1 {
        vec![start]
    } else {
        (0..steps)
            .map(|k| start + (stop - start) * k as f64 / (steps - 1) as f64)
            .collect()
    };
    Ok((name.to_string(), values))
}

fn csv_f64(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "nan".to_string(),
    }
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let cfg = load_config(&a.config)?;
    cfg.validate()?;
    let (param, values) = parse_sweep_spec(&a.spec)?;
    ensure_out_dir(&a.out)?;

    let rows = sweep(&cfg, &param, &values)?;
    let mut text = String::from("param,value,rho_star,t_o_star,peak_v,peak_u,J_sH,J_eH,J_H\n");
    for r in &rows {
        let d = r.diag.as_ref();
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            param,
            r.value,
            csv_f64(d.map(|d| d.rho)),
            csv_f64(d.map(|d| d.t_o)),
            csv_f64(d.map(|d| d.v_peak)),
            csv_f64(d.map(|d| d.u_peak)),
            csv_f64(d.map(|d| d.j_sh)),
            csv_f64(d.map(|d| d.j_eh)),
            csv_f64(d.map(|d| d.j_h)),
        ));
    }
    write_file(&a.out.join("sweep.csv"), &text)?;
    write_meta(
        &a.out.join("meta.json"),
        &cfg,
        &cfg.config_hash()?,
        None,
        serde_json::json!({ "param": param, "values": values }),
    )?;
    println!(
        "swept {param} over {} values -> {}",
        rows.len(),
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

fn cmd_generate(a: GenerateArgs) -> CliResult<()> {
    let topology =
        Topology::from_str(&a.topology).map_err(|e| CliError::config(e.to_string()))?;
    let bbox = [a.bbox[0], a.bbox[1]];
    let cfg = generate_config(topology, a.targets, a.agents, a.seed, bbox)
        .map_err(|e| CliError::config(e.to_string()))?;
    let text = cfg.canonical_json()?;
    match &a.out {
        Some(path) => {
            write_file(path, &text)?;
            println!(
                "{} targets, {} agents ({}) -> {}",
                a.targets,
                a.agents,
                topology.as_str(),
                path.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}
