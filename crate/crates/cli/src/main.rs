//! `ncmaj`: run the registered experiments from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use ncmaj_core::lab::{self, ExperimentReport, Verdict};
use ncmaj_core::Error as CoreError;
use serde_json::{json, Map, Value};

const SEED_ENV: &str = "NCMAJ_SEED";

#[derive(Parser, Debug)]
#[command(name = "ncmaj", version, about = "Seeded experiments on matrix-valued Boolean functions and random matrix ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write its JSON report.
    Run(RunArgs),
    /// List the registered experiments.
    List {
        /// Print the registry as JSON, including default parameters.
        #[arg(long)]
        json: bool,
    },
    /// Print the default parameters of an experiment.
    Defaults { experiment: String },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Experiment name; may be omitted when the config file names one.
    experiment: Option<String>,
    /// JSON config: a parameter object, or a previous report.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed. Overrides the config file and NCMAJ_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// Dimension p, or a comma-separated grid.
    #[arg(long)]
    p: Option<String>,
    /// Moment order K, or a comma-separated list.
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    restarts: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    family: Option<String>,
    /// psd-variant stages: all, constrained, relaxed or rounded.
    #[arg(long)]
    pipeline: Option<String>,
    /// JSON instance file (tensor, factor list or block matrix).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Any parameter as key=value; the value is JSON or a bare string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write each result table as CSV into this directory.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Errors that map to exit status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

/// Parameter keys a named flag may set, in order of preference.
fn flag_targets(flag: &str) -> &'static [&'static str] {
    match flag {
        "m" => &["m"],
        "n" => &["n"],
        "p" => &["p", "p_grid", "damping_p"],
        "K" => &["k", "ks"],
        "rho" => &["rho"],
        "tau" => &["tau"],
        "d" => &["d"],
        "samples" => &["samples"],
        "restarts" => &["restarts"],
        "tol" => &["tol", "tolerance", "limit_tol"],
        "kind" => &["kind"],
        "family" => &["family"],
        "pipeline" => &["pipeline"],
        _ => &[],
    }
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// A flag value shaped like the default it replaces: lists accept `a,b,c`.
fn parse_like(raw: &str, template: &Value) -> Value {
    match (template, parse_scalar(raw)) {
        (Value::Array(_), v @ Value::Array(_)) => v,
        (Value::Array(_), _) => Value::Array(raw.split(',').map(|s| parse_scalar(s.trim())).collect()),
        (_, v) => v,
    }
}

struct ConfigFile {
    experiment: Option<String>,
    params: Map<String, Value>,
    seed: Option<u64>,
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Usage(format!("{}: not valid JSON: {e}", path.display())).into())
}

/// A bare parameter object, or a report-shaped object with a `config` block.
fn read_config(path: &Path) -> anyhow::Result<ConfigFile> {
    let Value::Object(mut obj) = read_json(path)? else {
        return usage(format!("{}: config must be a JSON object", path.display()));
    };
    if let Some(cfg) = obj.remove("config") {
        let Value::Object(params) = cfg else {
            return usage(format!("{}: 'config' must be an object", path.display()));
        };
        let experiment = match obj.get("experiment") {
            Some(Value::String(s)) => Some(s.clone()),
            None => None,
            Some(_) => return usage(format!("{}: 'experiment' must be a string", path.display())),
        };
        let seed = match obj.get("seed") {
            Some(v) => Some(v.as_u64().ok_or_else(|| Usage(format!("{}: 'seed' must be a u64", path.display())))?),
            None => None,
        };
        Ok(ConfigFile { experiment, params, seed })
    } else {
        Ok(ConfigFile { experiment: None, params: obj, seed: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SeedSource {
    Flag,
    Config,
    Env,
    Time,
}

impl SeedSource {
    fn name(self) -> &'static str {
        match self {
            SeedSource::Flag => "flag",
            SeedSource::Config => "config",
            SeedSource::Env => "env",
            SeedSource::Time => "time",
        }
    }
}

fn choose_seed(flag: Option<u64>, config: Option<u64>) -> anyhow::Result<(u64, SeedSource)> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    if let Some(s) = config {
        return Ok((s, SeedSource::Config));
    }
    if let Ok(raw) = std::env::var(SEED_ENV) {
        let s = raw.trim().parse::<u64>().map_err(|_| Usage(format!("{SEED_ENV}='{raw}' is not a u64")))?;
        return Ok((s, SeedSource::Env));
    }
    let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0);
    Ok((t ^ u64::from(std::process::id()).rotate_left(32), SeedSource::Time))
}

/// Defaults, then the config file, then `--set`, then named flags.
fn resolve_params(experiment: &str, args: &RunArgs, file: Option<&ConfigFile>) -> anyhow::Result<Value> {
    let info = lab::find(experiment).ok_or_else(|| {
        let names: Vec<&str> = lab::registry().iter().map(|e| e.name).collect();
        Usage(format!("unknown experiment '{experiment}'; known: {}", names.join(", ")))
    })?;
    let Value::Object(mut params) = info.defaults() else { unreachable!("defaults are objects") };
    if let Some(f) = file {
        for (k, v) in &f.params {
            params.insert(k.clone(), v.clone());
        }
    }
    for kv in &args.set {
        let Some((k, v)) = kv.split_once('=') else {
            return usage(format!("--set expects KEY=VALUE, got '{kv}'"));
        };
        let template = params.get(k).cloned().unwrap_or(Value::Null);
        params.insert(k.to_string(), parse_like(v, &template));
    }
    let named = [
        ("m", &args.m),
        ("n", &args.n),
        ("p", &args.p),
        ("K", &args.k),
        ("rho", &args.rho),
        ("tau", &args.tau),
        ("d", &args.d),
        ("samples", &args.samples),
        ("restarts", &args.restarts),
        ("tol", &args.tol),
        ("kind", &args.kind),
        ("family", &args.family),
        ("pipeline", &args.pipeline),
    ];
    for (flag, value) in named {
        let Some(raw) = value else { continue };
        let Some(key) = flag_targets(flag).iter().find(|k| params.contains_key(**k)) else {
            return usage(format!("experiment '{experiment}' has no parameter for --{flag}"));
        };
        let v = parse_like(raw, &params[*key]);
        params.insert(key.to_string(), v);
    }
    if let Some(path) = &args.instance {
        if !params.contains_key("instance") && !matches!(experiment, "ncgi-opt" | "psd-variant") {
            return usage(format!("experiment '{experiment}' does not take an instance file"));
        }
        params.insert("instance".into(), read_json(path)?);
    }
    Ok(Value::Object(params))
}

fn report_json(report: &ExperimentReport, seed_source: SeedSource, workers: usize) -> Value {
    json!({
        "experiment": report.experiment,
        "config": report.params,
        "seed": report.seed,
        "seed_source": seed_source.name(),
        "results": report.results,
        "checks": report.checks,
        "tables": report.tables,
        "verdict": report.verdict,
        "timings": { "wall_clock_secs": report.wall_clock_secs, "workers": workers },
    })
}

fn write_csv(dir: &Path, report: &ExperimentReport) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in &report.tables {
        let path = dir.join(format!("{}-{}.csv", report.experiment, t.name));
        std::fs::write(&path, t.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<Verdict> {
    let file = args.config.as_deref().map(read_config).transpose()?;
    let experiment = match (&args.experiment, file.as_ref().and_then(|f| f.experiment.clone())) {
        (Some(a), Some(b)) if *a != b => return usage(format!("config is for '{b}' but '{a}' was requested")),
        (Some(a), _) => a.clone(),
        (None, Some(b)) => b,
        (None, None) => return usage("no experiment given"),
    };
    let params = resolve_params(&experiment, &args, file.as_ref())?;
    let (seed, source) = choose_seed(args.seed, file.as_ref().and_then(|f| f.seed))?;
    let workers = match args.workers {
        Some(0) => return usage("--workers must be positive"),
        Some(w) => w,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    eprintln!("seed: {seed} ({})", source.name());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let report = pool.install(|| lab::run_experiment(&experiment, &params, seed)).map_err(|e| match e {
        CoreError::InvalidInput(_) | CoreError::EnumerationLimit { .. } | CoreError::Unsupported(_) => {
            anyhow::Error::new(Usage(format!("{experiment}: {e}")))
        }
        other => anyhow!("{experiment}: {other}"),
    })?;
    let text = serde_json::to_string_pretty(&report_json(&report, source, workers))? + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    if let Some(dir) = &args.csv {
        write_csv(dir, &report)?;
    }
    for c in report.hard_failures() {
        eprintln!("FAILED {}: {}", c.name, c.detail);
    }
    eprintln!("verdict: {}", serde_json::to_value(report.verdict)?.as_str().unwrap_or("?"));
    Ok(report.verdict)
}

fn cmd_list(as_json: bool) {
    if as_json {
        let items: Vec<Value> = lab::registry()
            .iter()
            .map(|e| json!({"name": e.name, "summary": e.summary, "anchor": e.anchor, "defaults": e.defaults()}))
            .collect();
        println!("{}", serde_json::to_string_pretty(&items).expect("registry serializes"));
        return;
    }
    let width = lab::registry().iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in lab::registry() {
        println!("{:width$}  {}  [{}]", e.name, e.summary, e.anchor);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args).map(|v| if v == Verdict::Fail { 1 } else { 0 }),
        Command::List { json } => {
            cmd_list(json);
            Ok(0)
        }
        Command::Defaults { experiment } => match lab::find(&experiment) {
            Some(e) => {
                println!("{}", serde_json::to_string_pretty(&e.defaults()).expect("defaults serialize"));
                Ok(0)
            }
            None => usage(format!("unknown experiment '{experiment}'")),
        },
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_values_follow_the_default_shape() {
        assert_eq!(parse_like("64,128", &json!([1])), json!([64, 128]));
        assert_eq!(parse_like("[2,3]", &json!([1])), json!([2, 3]));
        assert_eq!(parse_like("7", &json!([1])), json!([7]));
        assert_eq!(parse_like("spread", &json!("dictator")), json!("spread"));
        assert_eq!(parse_like("0.5", &json!(0.1)), json!(0.5));
    }

    #[test]
    fn flags_land_on_the_right_keys() {
        let args = RunArgs { p: Some("8,32".into()), k: Some("2".into()), ..Default::default() };
        let v = resolve_params("ensemble-check", &args, None).unwrap();
        assert_eq!(v["damping_p"], json!([8, 32]));
        assert_eq!(v["ks"], json!([2]));
        let args = RunArgs { p: Some("32".into()), ..Default::default() };
        assert_eq!(resolve_params("chop", &args, None).unwrap()["p_grid"], json!([32]));
        assert_eq!(resolve_params("noise-stability", &args, None).unwrap()["p"], json!(32));
    }

    #[test]
    fn flags_beat_set_and_config() {
        let file = ConfigFile { experiment: None, params: json!({"m": 3, "n": 60}).as_object().unwrap().clone(), seed: None };
        let args = RunArgs { m: Some("4".into()), set: vec!["m=9".into(), "samples=5".into()], ..Default::default() };
        let v = resolve_params("counterexample-wigner", &args, Some(&file)).unwrap();
        assert_eq!((v["m"].clone(), v["n"].clone(), v["samples"].clone()), (json!(4), json!(60), json!(5)));
    }

    #[test]
    fn inapplicable_flag_is_a_usage_error() {
        let args = RunArgs { rho: Some("0.5".into()), ..Default::default() };
        let e = resolve_params("kd-estimate", &args, None).unwrap_err();
        assert!(e.is::<Usage>());
        assert!(resolve_params("no-such", &RunArgs::default(), None).unwrap_err().is::<Usage>());
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(choose_seed(Some(1), Some(2)).unwrap(), (1, SeedSource::Flag));
        assert_eq!(choose_seed(None, Some(2)).unwrap(), (2, SeedSource::Config));
    }
}
