use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use depcheck_core::checker::{CheckError, Semantics, SolverConfig, SolverMethod};
use depcheck_core::dependability::{DependabilityConfig, DependabilityReport, PropertyValue};
use depcheck_core::estimation::{read_jsonl, write_jsonl, RiskMap};
use depcheck_core::oracle::{self, mc_estimate_many, OracleConfig, OracleError};
use depcheck_core::pctl::{self, EvalError, EvalOptions, EvalValue, StateFormula};
use depcheck_core::pipeline::{build_model, success_rate, BuildProvenance};
use depcheck_core::simenv::{self, SimConfig};
use depcheck_core::{prism, LabeledDtmc};

#[derive(Parser)]
#[command(name = "depcheck", version, about = "Dependability analysis of robot trajectories via PCTL model checking")]
struct Cli {
    /// Reward semantics when a target may be missed.
    #[arg(long, global = true, value_enum, default_value_t = SemanticsArg::Conditional)]
    semantics: SemanticsArg,
    /// Report negative detection and recovery values as 0.
    #[arg(long, global = true)]
    clamp: bool,
    #[arg(long, global = true, value_enum, default_value_t = SolverArg::Auto)]
    solver: SolverArg,
    /// Convergence tolerance of the iterative solver.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tolerance: f64,
    #[arg(long, global = true, default_value_t = 1_000_000)]
    max_iterations: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemanticsArg {
    Conditional,
    Strict,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Auto,
    Direct,
    Iterative,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(clap::Args)]
struct SimArgs {
    /// Simulator configuration (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, env = "DEPCHECK_SEED")]
    seed: Option<u64>,
}

impl SimArgs {
    fn load(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::parse(&read(p)?)?,
            None => SimConfig::default(),
        };
        if let Some(e) = self.episodes {
            cfg.episodes = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate episodes with the navigation simulator.
    Simulate {
        #[arg(long)]
        sigma: Option<f64>,
        #[command(flatten)]
        sim: SimArgs,
        /// Output JSONL file (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Estimate the product model from episodes.
    Build {
        episodes: PathBuf,
        /// `default` or a TOML/JSON risk map file.
        #[arg(long, default_value = "default")]
        riskmap: String,
        /// Leave timed-out episodes out of the mission length estimate.
        #[arg(long)]
        exclude_timeouts: bool,
        /// Model JSON (stdout if omitted); provenance goes to `<output>.provenance.json`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check properties on a model.
    Verify {
        model: PathBuf,
        /// `all` for the dependability suite, or a property file.
        #[arg(long, default_value = "all", conflicts_with = "prop")]
        props: String,
        /// A single PCTL query.
        #[arg(long)]
        prop: Option<String>,
        /// Cross-check with Monte Carlo simulation.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 1_000_000)]
        traces: usize,
        #[arg(long, env = "DEPCHECK_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Simulate, build and verify over a grid of noise levels.
    Sweep {
        /// `start:stop:step` or a single value.
        #[arg(long, default_value = "0.1:2.0:0.1")]
        sigma: String,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value = "default")]
        riskmap: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Properties against growing sample counts at one noise level.
    Convergence {
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 500)]
        max: usize,
        #[arg(long, default_value_t = 50)]
        step: usize,
        /// Largest change between successive rows counted as stable.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Stability is judged from this sample count on.
        #[arg(long, default_value_t = 300)]
        stable_from: usize,
        #[arg(long, env = "DEPCHECK_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "default")]
        riskmap: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the model as PRISM `.pm` and `.props` files.
    ExportPrism {
        model: PathBuf,
        /// Output prefix; defaults to the model path without extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Bad invocation detected after argument parsing; exits with 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<CheckError>() {
            return 3;
        }
        if let Some(EvalError::Check(_)) = cause.downcast_ref::<EvalError>() {
            return 3;
        }
    }
    2
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_riskmap(spec: &str) -> Result<RiskMap> {
    let map = if spec == "default" { RiskMap::default() } else { RiskMap::parse(&read(Path::new(spec))?)? };
    map.validate()?;
    Ok(map)
}

fn load_model(path: &Path) -> Result<LabeledDtmc> {
    let model = LabeledDtmc::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let violations = model.validate();
    if let Some(v) = violations.first() {
        bail!("{}: invalid model ({} problems, first: {v:?})", path.display(), violations.len());
    }
    Ok(model)
}

fn provenance_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".provenance.json");
    PathBuf::from(name)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let dep = DependabilityConfig {
        semantics: match cli.semantics {
            SemanticsArg::Conditional => Semantics::Conditional,
            SemanticsArg::Strict => Semantics::Strict,
        },
        clamp: cli.clamp,
        solver: SolverConfig {
            method: match cli.solver {
                SolverArg::Auto => SolverMethod::Auto,
                SolverArg::Direct => SolverMethod::Direct,
                SolverArg::Iterative => SolverMethod::Iterative,
            },
            tolerance: cli.tolerance,
            max_iterations: cli.max_iterations,
        },
    };
    dep.solver.check().map_err(|e| usage(e.to_string()))?;
    match cli.command {
        Command::Simulate { sigma, sim, output } => {
            let mut cfg = sim.load()?;
            if let Some(s) = sigma {
                cfg.sigma = s;
            }
            let episodes = simenv::simulate(&cfg)?;
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &episodes)?;
            write_out(output.as_deref(), std::str::from_utf8(&buf)?)
        }
        Command::Build { episodes, riskmap, exclude_timeouts, output } => {
            let riskmap = load_riskmap(&riskmap)?;
            let file = fs::File::open(&episodes).with_context(|| format!("opening {}", episodes.display()))?;
            let eps = read_jsonl(BufReader::new(file))?;
            let built = build_model(&eps, &riskmap, !exclude_timeouts)?;
            for w in &built.warnings {
                eprintln!("warning: {w}");
            }
            write_out(output.as_deref(), &built.product.model.to_json())?;
            if let Some(out) = output {
                fs::write(provenance_path(&out), serde_json::to_string_pretty(&built.provenance)?)?;
            }
            Ok(())
        }
        Command::Verify { model, props, prop, oracle, traces, seed, format } => {
            let m = load_model(&model)?;
            let cfg = OracleConfig::new(traces, seed);
            if prop.is_none() && props == "all" {
                let prov: Option<BuildProvenance> = match fs::read_to_string(provenance_path(&model)) {
                    Ok(text) => Some(serde_json::from_str(&text).context("parsing provenance sidecar")?),
                    Err(_) => None,
                };
                let report = depcheck_core::dependability::report(
                    &m,
                    &dep,
                    prov.as_ref().map(|p| p.sample_count),
                    prov.as_ref().map(|p| &p.riskmap),
                    prov.as_ref().map(|p| p.l_mis),
                )?;
                let mut text = render_report(&report, format);
                if oracle {
                    let formulas: Vec<(String, StateFormula)> =
                        pctl::builtin_suite().into_iter().map(|(n, f)| (n.to_string(), f)).collect();
                    text.push_str(&render_queries(&m, &formulas, &dep, Some(&cfg), format, true)?);
                }
                return write_out(None, &text);
            }
            let formulas: Vec<(String, StateFormula)> = match prop {
                Some(p) => vec![(p.clone(), pctl::parse(&p).map_err(|e| usage(format!("bad property: {e}")))?)],
                None => pctl::parse_property_file(&read(Path::new(&props))?)
                    .map_err(|(line, e)| usage(format!("{props}:{line}: {e}")))?
                    .into_iter()
                    .map(|p| (p.formula.to_string(), p.formula))
                    .collect(),
            };
            let text = render_queries(&m, &formulas, &dep, oracle.then_some(&cfg), format, false)?;
            write_out(None, &text)
        }
        Command::Sweep { sigma, sim, riskmap, output } => {
            let riskmap = load_riskmap(&riskmap)?;
            let sigmas = simenv::parse_sigma_spec(&sigma).map_err(|e| usage(e.to_string()))?;
            let base = sim.load()?;
            let mut csv = format!("sigma,{},success_rate\n", five_header());
            for (s, eps) in simenv::sweep(&sigmas, &base)? {
                let report = build_model(&eps, &riskmap, true)?.report(&dep)?;
                csv.push_str(&format!("{s},{},{}\n", five_row(&report), success_rate(&eps)));
            }
            write_out(output.as_deref(), &csv)
        }
        Command::Convergence { sigma, max, step, tolerance, stable_from, seed, config, riskmap, output } => {
            if step == 0 || max < step {
                return Err(usage("need step >= 1 and max >= step"));
            }
            let riskmap = load_riskmap(&riskmap)?;
            let base = match &config {
                Some(p) => SimConfig::parse(&read(p)?)?,
                None => SimConfig::default(),
            };
            let cfg = SimConfig { sigma, seed, episodes: max, ..base };
            let eps = simenv::simulate(&cfg)?;
            let mut csv = format!("n,{},stable\n", five_header());
            let mut prev: Option<[PropertyValue; 5]> = None;
            let mut all_stable = true;
            for n in (step..=max).step_by(step) {
                let report = build_model(&eps[..n], &riskmap, true)?.report(&dep)?;
                let vals = five(&report);
                let stable = match &prev {
                    Some(p) if n >= stable_from => {
                        let ok = p.iter().zip(&vals).all(|(a, b)| close(*a, *b, tolerance));
                        all_stable &= ok;
                        ok.to_string()
                    }
                    _ => String::new(),
                };
                csv.push_str(&format!("{n},{},{stable}\n", five_row(&report)));
                prev = Some(vals);
            }
            write_out(output.as_deref(), &csv)?;
            eprintln!("stable from n={stable_from} within {tolerance}: {all_stable}");
            Ok(())
        }
        Command::ExportPrism { model, output } => {
            let m = load_model(&model)?;
            let e = prism::export(&m)?;
            for w in &e.warnings {
                eprintln!("warning: {w}");
            }
            let prefix = output.unwrap_or_else(|| model.with_extension(""));
            let pm = prefix.with_extension("pm");
            let props = prefix.with_extension("props");
            fs::write(&pm, e.model).with_context(|| format!("writing {}", pm.display()))?;
            fs::write(&props, e.properties).with_context(|| format!("writing {}", props.display()))?;
            println!("{}\n{}", pm.display(), props.display());
            Ok(())
        }
    }
}

fn five(r: &DependabilityReport) -> [PropertyValue; 5] {
    [PropertyValue::Value(r.safety), r.resilience, PropertyValue::Value(r.robustness), r.detection, r.recovery]
}

fn five_header() -> &'static str {
    "safety,resilience,robustness,detection,recovery"
}

fn five_row(r: &DependabilityReport) -> String {
    five(r).map(depcheck_core::dependability::csv_value).join(",")
}

fn close(a: PropertyValue, b: PropertyValue, tol: f64) -> bool {
    match (a.value(), b.value()) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => a == b,
    }
}

fn render_report(r: &DependabilityReport, format: Format) -> String {
    match format {
        Format::Table => r.to_table(),
        Format::Json => r.to_json() + "\n",
        Format::Csv => format!("{}\n{}\n", DependabilityReport::csv_header(), r.to_csv_row()),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_queries(
    m: &LabeledDtmc,
    formulas: &[(String, StateFormula)],
    dep: &DependabilityConfig,
    oracle_cfg: Option<&OracleConfig>,
    format: Format,
    appended: bool,
) -> Result<String> {
    let opts = EvalOptions { solver: dep.solver, semantics: dep.semantics };
    let mut values = Vec::new();
    for (_, f) in formulas {
        values.push(match pctl::evaluate(f, m, m.initial(), &opts) {
            Ok(v) => Some(v),
            Err(EvalError::Check(CheckError::NullConditioning { .. })) => None,
            Err(e) => return Err(e.into()),
        });
    }
    let mut mc: Vec<Option<Result<oracle::Estimate, OracleError>>> = vec![None; formulas.len()];
    if let Some(cfg) = oracle_cfg {
        let mut queries = Vec::new();
        let mut slots = Vec::new();
        for (i, (_, f)) in formulas.iter().enumerate() {
            if let Some(q) = oracle::query_for_formula(f, m)? {
                queries.push(q);
                slots.push(i);
            }
        }
        for (i, est) in slots.into_iter().zip(mc_estimate_many(m, &queries, cfg)?) {
            mc[i] = Some(est);
        }
    }
    let shown = |v: &Option<EvalValue>| match v {
        Some(v) => v.to_string(),
        None => "undefined".to_string(),
    };
    let agree = |v: &Option<EvalValue>, e: &oracle::Estimate| match v.and_then(|v| v.as_number()) {
        Some(x) => e.agrees(x, 3.0),
        None => false,
    };

    let mut out = String::new();
    match format {
        Format::Json => {
            let rows: Vec<serde_json::Value> = formulas
                .iter()
                .zip(&values)
                .zip(&mc)
                .map(|(((name, _), v), e)| {
                    let value = match v {
                        Some(EvalValue::Number(x)) if x.is_finite() => serde_json::json!(x),
                        Some(EvalValue::Bool(b)) => serde_json::json!(b),
                        other => serde_json::json!(shown(other)),
                    };
                    let mut row = serde_json::json!({ "property": name, "value": value });
                    match e {
                        Some(Ok(est)) => {
                            row["oracle"] = serde_json::to_value(est).unwrap();
                            row["agrees"] = serde_json::json!(agree(v, est));
                        }
                        Some(Err(err)) => row["oracle"] = serde_json::json!(err.to_string()),
                        None => {}
                    }
                    row
                })
                .collect();
            out = serde_json::to_string_pretty(&rows)? + "\n";
        }
        Format::Csv => {
            if appended {
                out.push('\n');
            }
            out.push_str("property,value");
            if oracle_cfg.is_some() {
                out.push_str(",mc_estimate,mc_std_error,mc_truncated,agrees_3se");
            }
            out.push('\n');
            for (((name, _), v), e) in formulas.iter().zip(&values).zip(&mc) {
                out.push_str(&format!("{},{}", csv_field(name), shown(v)));
                match e {
                    Some(Ok(est)) => out.push_str(&format!(
                        ",{},{},{},{}",
                        est.estimate,
                        est.std_error,
                        est.truncated_fraction,
                        agree(v, est)
                    )),
                    Some(Err(_)) => out.push_str(",undefined,,,false"),
                    None if oracle_cfg.is_some() => out.push_str(",,,,"),
                    None => {}
                }
                out.push('\n');
            }
        }
        Format::Table => {
            if appended {
                out.push('\n');
            }
            let width = formulas.iter().map(|(n, _)| n.len()).max().unwrap_or(8).max(8);
            out.push_str(&format!("{:<width$}  {:>14}", "property", "value"));
            if oracle_cfg.is_some() {
                out.push_str(&format!("  {:>14}  {:>10}  agrees(3se)", "monte carlo", "std err"));
            }
            out.push('\n');
            for (((name, _), v), e) in formulas.iter().zip(&values).zip(&mc) {
                let value = match v {
                    Some(EvalValue::Number(x)) if x.is_finite() => format!("{x:.9}"),
                    other => shown(other),
                };
                out.push_str(&format!("{name:<width$}  {value:>14}"));
                match e {
                    Some(Ok(est)) => out.push_str(&format!(
                        "  {:>14.9}  {:>10.3e}  {}",
                        est.estimate,
                        est.std_error,
                        agree(v, est)
                    )),
                    Some(Err(err)) => out.push_str(&format!("  {err}")),
                    None => {}
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}
