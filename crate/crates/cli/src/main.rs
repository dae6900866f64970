mod config;
mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use imcf_core::{
    barrier, build_profile, check_assumptions, default_window, fit_decay_values, record_run, run,
    AssumptionOptions, DecayModel, DiagnosticsError, FlowConfig, FlowEvent, Grid, Profile,
    Termination, V_EXCESS,
};
use serde_json::{json, Value};

use crate::config::Settings;
use crate::output::{fmt_f64, json_f64, to_json, write_json, write_series, write_state, Table};
use crate::plot::{Chart, Curve};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_ASSUMPTION_A: u8 = 2;
const EXIT_MEAN_CONVEXITY: u8 = 3;
const EXIT_DOMAIN: u8 = 4;
const EXIT_FIT_UNDEFINED: u8 = 5;

#[derive(Parser)]
#[command(
    name = "imcf",
    version,
    about = "Inverse mean curvature flow in warped cylinders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the profile hypotheses and print the report.
    CheckProfile(CheckArgs),
    /// Run the flow and write series.csv, final_state.csv and manifest.json.
    Simulate(SimulateArgs),
    /// Fit exponential decay models to a series column.
    FitDecay(FitArgs),
    /// Draw series columns as an SVG chart with a log-scale y axis.
    Plot(PlotArgs),
}

/// Settings keys, each overriding the config file entry of the same name.
#[derive(Args, Debug, Default, Clone)]
struct Keys {
    /// Config file with [profile], [flow], [check] and [output] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    path: Option<String>,
    #[arg(long)]
    r0: Option<String>,
    #[arg(long = "r_max")]
    r_max: Option<String>,
    #[arg(long)]
    theta0: Option<String>,
    #[arg(long = "horizon_margin")]
    horizon_margin: Option<String>,
    #[arg(long)]
    slope0: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "c_cfl")]
    c_cfl: Option<String>,
    #[arg(long = "t_end")]
    t_end: Option<String>,
    #[arg(long = "output_every")]
    output_every: Option<String>,
    #[arg(long = "h_floor")]
    h_floor: Option<String>,
    #[arg(long)]
    margin: Option<String>,
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    cap: Option<String>,
    #[arg(long = "out_dir")]
    out_dir: Option<String>,
}

impl Keys {
    fn pairs(&self) -> [(&'static str, &Option<String>); 24] {
        [
            ("family", &self.family),
            ("k", &self.k),
            ("kappa", &self.kappa),
            ("m", &self.m),
            ("q", &self.q),
            ("a", &self.a),
            ("omega", &self.omega),
            ("path", &self.path),
            ("r0", &self.r0),
            ("r_max", &self.r_max),
            ("theta0", &self.theta0),
            ("horizon_margin", &self.horizon_margin),
            ("slope0", &self.slope0),
            ("n", &self.n),
            ("grid", &self.grid),
            ("c_cfl", &self.c_cfl),
            ("t_end", &self.t_end),
            ("output_every", &self.output_every),
            ("h_floor", &self.h_floor),
            ("margin", &self.margin),
            ("initial", &self.initial),
            ("samples", &self.samples),
            ("cap", &self.cap),
            ("out_dir", &self.out_dir),
        ]
    }

    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        for (key, value) in self.pairs() {
            if let Some(v) = value {
                s.set(key, v.clone());
            }
        }
        Ok(s)
    }
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    keys: Keys,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    keys: Keys,
    /// `key=v1,v2,...`; repeat for a cartesian product. Each run gets its
    /// own directory under the output root.
    #[arg(long)]
    sweep: Vec<String>,
    /// Worker threads for sweeps.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    keys: Keys,
    #[arg(long)]
    series: PathBuf,
    /// Series column, or `v_excess` for `sup_v² − 1`.
    #[arg(long, default_value = "sup_weighted_deficit")]
    quantity: String,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    keys: Keys,
    #[arg(long)]
    series: PathBuf,
    /// Comma-separated series columns.
    #[arg(long, default_value = "min_u,max_u")]
    columns: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    title: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::CheckProfile(args) => check_profile(args),
        Command::Simulate(args) => simulate(args),
        Command::FitDecay(args) => fit_decay_cmd(args),
        Command::Plot(args) => plot_cmd(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn check_profile(args: CheckArgs) -> Result<u8> {
    let settings = args.keys.settings()?;
    let spec = settings.profile_spec()?;
    let profile: Profile = build_profile(&spec)?;
    let mut opts = AssumptionOptions::default();
    if let Some(s) = settings.parsed("samples")? {
        opts.samples = s;
    }
    if let Some(c) = settings.parsed("cap")? {
        opts.cap = c;
    }
    let report = check_assumptions(&profile, &opts);
    let (r0, r_max) = profile.domain();
    let theta_bar_zero = report.assumption_c.sup_abs_theta_bar == 0.0;
    let doc = json!({
        "profile": to_json(&spec)?,
        "domain": [json_f64(r0), json_f64(r_max)],
        "theta_bar_identically_zero": theta_bar_zero,
        "report": to_json(&report)?,
    });
    if args.json {
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        let c = &report.assumption_c;
        println!(
            "profile: {} on [{}, {}]",
            spec.family.name(),
            fmt_f64(r0),
            fmt_f64(r_max)
        );
        match report.assumption_a.first_violation {
            None => println!("assumption A: pass"),
            Some(r) => println!("assumption A: fail (first violation at r = {})", fmt_f64(r)),
        }
        println!("constB1: {}", fmt_f64(report.const_b1));
        match report.const_b2 {
            Some(b2) => println!(
                "constB2: {} (division: {:?})",
                fmt_f64(b2),
                report.b2_division
            ),
            None => println!("constB2: inf (division: {:?})", report.b2_division),
        }
        match c.lambda {
            Some(l) => println!("assumption C: holds with lambda = {}", fmt_f64(l)),
            None => println!("assumption C: no lambda > 2 in the grid"),
        }
        println!("sup theta'/theta: {}", fmt_f64(c.sup_log_derivative));
        if theta_bar_zero {
            println!("theta_bar: identically zero on the samples");
        } else {
            println!("sup |theta_bar|: {}", fmt_f64(c.sup_abs_theta_bar));
        }
    }
    if let Some(path) = &args.out {
        write_json(path, &doc)?;
    }
    Ok(if report.assumption_a.pass {
        EXIT_OK
    } else {
        EXIT_ASSUMPTION_A
    })
}

/// Expands `key=v1,v2` entries into the cartesian product of settings.
fn sweep_settings(base: &Settings, sweep: &[String]) -> Result<Vec<(String, Settings)>> {
    let mut runs = vec![(String::new(), base.clone())];
    for entry in sweep {
        let (key, values) = entry
            .split_once('=')
            .ok_or_else(|| anyhow!("sweep entry {entry:?} needs key=values"))?;
        let key = key.trim();
        if !config::SECTIONS.iter().any(|(_, keys)| keys.contains(&key)) || key == "out_dir" {
            bail!("cannot sweep over {key:?}");
        }
        let values: Vec<&str> = values.split(';').flat_map(|v| split_top_level(v)).collect();
        if values.is_empty() {
            bail!("sweep entry {entry:?} has no values");
        }
        let mut next = Vec::new();
        for (label, s) in &runs {
            for v in &values {
                let mut s = s.clone();
                s.set(key, v.trim());
                let tag = format!("{key}={}", v.trim());
                next.push((
                    if label.is_empty() {
                        tag
                    } else {
                        format!("{label},{tag}")
                    },
                    s,
                ));
            }
        }
        runs = next;
    }
    Ok(runs)
}

/// Splits on commas that are not inside parentheses.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out.into_iter().filter(|s| !s.trim().is_empty()).collect()
}

fn simulate(args: SimulateArgs) -> Result<u8> {
    let settings = args.keys.settings()?;
    if args.sweep.is_empty() {
        let dir = settings.out_dir();
        return Ok(simulate_one(&settings, &dir, None));
    }
    let root = settings.out_dir();
    let runs = sweep_settings(&settings, &args.sweep)?;
    let workers = args
        .threads
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .clamp(1, runs.len());
    let next = AtomicUsize::new(0);
    let codes = Mutex::new(vec![EXIT_OK; runs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((label, s)) = runs.get(i) else { break };
                let dir = root.join(format!("run_{i:03}"));
                let code = simulate_one(s, &dir, Some(label));
                codes.lock().expect("exit code table")[i] = code;
            });
        }
    });
    let codes = codes.into_inner().expect("exit code table");
    let index: Vec<Value> = runs
        .iter()
        .zip(&codes)
        .enumerate()
        .map(|(i, ((label, _), code))| json!({"dir": format!("run_{i:03}"), "sweep": label, "exit_code": code}))
        .collect();
    std::fs::create_dir_all(&root)?;
    write_json(&root.join("sweep.json"), &Value::Array(index))?;
    Ok(codes.into_iter().max().unwrap_or(EXIT_OK))
}

struct Finished {
    code: u8,
    termination: Value,
    events: Vec<FlowEvent>,
    steps: usize,
    outputs: Vec<(&'static str, PathBuf)>,
    flow: Option<FlowConfig>,
}

fn simulate_one(settings: &Settings, dir: &Path, sweep: Option<&str>) -> u8 {
    let started = Utc::now();
    let prefix = sweep.map(|s| format!("[{s}] ")).unwrap_or_default();
    if let Err(e) = std::fs::create_dir_all(dir) {
        eprintln!("{prefix}error: creating {}: {e}", dir.display());
        return EXIT_CONFIG;
    }
    let spec = settings.profile_spec();
    let finished = execute(settings, dir).unwrap_or_else(|e| {
        eprintln!("{prefix}error: {e:#}");
        Finished {
            code: EXIT_CONFIG,
            termination: json!({"reason": "error", "message": format!("{e:#}")}),
            events: Vec::new(),
            steps: 0,
            outputs: Vec::new(),
            flow: None,
        }
    });
    for event in &finished.events {
        eprintln!(
            "{prefix}event: {}",
            serde_json::to_string(event).unwrap_or_default()
        );
    }
    let manifest_path = dir.join("manifest.json");
    let mut outputs: serde_json::Map<String, Value> = finished
        .outputs
        .iter()
        .map(|(k, p)| (k.to_string(), json!(p.display().to_string())))
        .collect();
    outputs.insert(
        "manifest".into(),
        json!(manifest_path.display().to_string()),
    );
    let manifest = json!({
        "artifact": "imcf",
        "version": env!("CARGO_PKG_VERSION"),
        "started": started.to_rfc3339_opts(SecondsFormat::Millis, true),
        "finished": Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        "sweep": sweep,
        "config": settings.as_map(),
        "profile": spec.ok().and_then(|s| to_json(&s).ok()),
        "flow": finished.flow.as_ref().and_then(|f| to_json(f).ok()),
        "termination": finished.termination,
        "exit_code": finished.code,
        "steps": finished.steps,
        "events": to_json(&finished.events).unwrap_or(Value::Null),
        "outputs": outputs,
    });
    if let Err(e) = write_json(&manifest_path, &manifest) {
        eprintln!("{prefix}error: {e:#}");
        return finished.code.max(EXIT_CONFIG);
    }
    finished.code
}

fn execute(settings: &Settings, dir: &Path) -> Result<Finished> {
    let spec = settings.profile_spec()?;
    let cfg = settings.flow_config()?;
    let profile: Profile = build_profile(&spec)?;
    let grid: Grid = cfg.sphere_grid()?;
    let initial = cfg.initial.build(&grid, &profile)?;
    let result = run(&cfg, &grid, &profile, initial)?;
    let series = record_run(&grid, &profile, &result);

    let config_path = dir.join("config.ini");
    std::fs::write(&config_path, settings.to_config_text())
        .with_context(|| format!("writing {}", config_path.display()))?;
    let series_path = dir.join("series.csv");
    write_series(&series_path, &series)?;
    let state_path = dir.join("final_state.csv");
    write_state(&state_path, &grid, result.last())?;

    let code = match result.termination {
        Termination::Completed => EXIT_OK,
        Termination::MeanConvexityLost { .. } => EXIT_MEAN_CONVEXITY,
        Termination::DomainExit { .. } => EXIT_DOMAIN,
    };
    Ok(Finished {
        code,
        termination: to_json(&result.termination)?,
        events: result.events,
        steps: result.steps,
        outputs: vec![
            ("config", config_path),
            ("series", series_path),
            ("final_state", state_path),
        ],
        flow: Some(cfg),
    })
}

fn fit_decay_cmd(args: FitArgs) -> Result<u8> {
    let settings = args.keys.settings()?;
    let table = Table::read(&args.series)?;
    let t = table.column("t")?.to_vec();
    let q: Vec<f64> = if args.quantity == V_EXCESS {
        table.column("sup_v")?.iter().map(|v| v * v - 1.0).collect()
    } else {
        if args.quantity == "t" {
            bail!("cannot fit the time column");
        }
        table.column(&args.quantity)?.to_vec()
    };
    let t_last = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (d1, d2) = default_window(t_last, settings.dimension()?);
    let window = (args.t1.unwrap_or(d1), args.t2.unwrap_or(d2));

    let mut fits = serde_json::Map::new();
    let mut undefined = None;
    for model in [DecayModel::PureExp, DecayModel::ExpLog] {
        match fit_decay_values(&args.quantity, &t, &q, window, model) {
            Ok(fit) => {
                fits.insert(model.name().into(), to_json(&fit)?);
            }
            Err(e @ DiagnosticsError::FitUndefined { .. }) => {
                fits.insert(model.name().into(), json!({"error": e.to_string()}));
                undefined = Some(e);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let doc = json!({
        "series": args.series.display().to_string(),
        "quantity": args.quantity,
        "window": [json_f64(window.0), json_f64(window.1)],
        "fits": fits,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if let Some(path) = &args.out {
        write_json(path, &doc)?;
    }
    if let Some(e) = undefined {
        eprintln!("error: {e}");
        return Ok(EXIT_FIT_UNDEFINED);
    }
    Ok(EXIT_OK)
}

fn plot_cmd(args: PlotArgs) -> Result<u8> {
    let settings = args.keys.settings()?;
    let table = Table::read(&args.series)?;
    let t = table.column("t")?.to_vec();
    let mut chart = Chart {
        title: args
            .title
            .clone()
            .unwrap_or_else(|| args.series.display().to_string()),
        curves: Vec::new(),
    };
    for name in args
        .columns
        .split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
    {
        let y = table.column(name)?.to_vec();
        chart.curves.push(plot::Curve {
            label: name.to_owned(),
            t: t.clone(),
            y,
            dashed: false,
        });
    }
    if settings.get("family").is_some() {
        chart.curves.extend(barrier_envelopes(&settings, &table)?);
    }
    let svg = chart.to_svg()?;
    let out = match args.out {
        Some(p) => p,
        None => {
            let dir = settings.out_dir();
            std::fs::create_dir_all(&dir)?;
            dir.join("plot.svg")
        }
    };
    std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", out.display());
    Ok(EXIT_OK)
}

/// Round solutions started at the initial `min_u` and `max_u`.
fn barrier_envelopes(settings: &Settings, table: &Table) -> Result<Vec<Curve>> {
    let profile: Profile = build_profile(&settings.profile_spec()?)?;
    let n = settings.dimension()?;
    let t = table.column("t")?;
    let lo = table.column("min_u")?[0];
    let hi = table.column("max_u")?[0];
    let mut curves = Vec::new();
    for (label, r0) in [("barrier(min u0)", lo), ("barrier(max u0)", hi)] {
        let (ts, ys): (Vec<f64>, Vec<f64>) = t
            .iter()
            .filter_map(|&ti| barrier(&profile, r0, ti, n).ok().map(|y| (ti, y)))
            .unzip();
        curves.push(Curve {
            label: label.into(),
            t: ts,
            y: ys,
            dashed: true,
        });
    }
    Ok(curves)
}
