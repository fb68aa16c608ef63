//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::hitting::{analyze_trace, HittingResult};
use crate::model::{parse_model, validate_model, SemiMarkovModel};
use crate::oracle::{
    convergence_check, exact_expectation, exact_laplace, simulate_hitting, write_samples_csv,
    FixedEpsModel, SimulationStats,
};
use crate::rational::format_rational;
use crate::reduction::{reduce, ReductionTrace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Reduce,
    Hitting,
    Expect,
    Simulate,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model_path: PathBuf,
    pub eps_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub format: Format,
    pub trace: bool,
    /// Initial state label for `simulate`; defaults to the first exterior state.
    pub start: Option<String>,
    /// Where `simulate` writes its samples.
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command, model_path: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            command,
            model_path: model_path.into(),
            eps_grid: vec![1e-2, 1e-3, 1e-4],
            s_grid: vec![0.5, 1.0, 2.0],
            n_samples: 10_000,
            seed: 1,
            format: Format::Json,
            trace: false,
            start: None,
            csv: None,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err("--eps values must lie in (0, 1]".into());
        }
        if self.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err("--eps must be strictly decreasing".into());
        }
        if self.s_grid.is_empty() || self.s_grid.iter().any(|&s| !(s > 0.0)) {
            return Err("--s values must be positive".into());
        }
        if self.s_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err("--s must be strictly increasing".into());
        }
        if self.n_samples == 0 {
            return Err("--samples must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "hitreduce", version, about = "Hitting-time asymptotics for perturbed semi-Markov processes")]
pub struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Check the standing conditions.
    Validate(Args),
    /// Run the reduction and print its summary or full trace.
    Reduce(Args),
    /// Limiting hitting-time transforms and probabilities.
    Hitting(Args),
    /// Limiting expectations and their normalizations.
    Expect(Args),
    /// Monte Carlo hitting times at the first eps.
    Simulate(Args),
    /// Compare the limits with fixed-eps oracles along the eps grid.
    Verify(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    s: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl From<Cli> for RunConfig {
    fn from(cli: Cli) -> RunConfig {
        let (command, a) = match cli.command {
            CliCommand::Validate(a) => (Command::Validate, a),
            CliCommand::Reduce(a) => (Command::Reduce, a),
            CliCommand::Hitting(a) => (Command::Hitting, a),
            CliCommand::Expect(a) => (Command::Expect, a),
            CliCommand::Simulate(a) => (Command::Simulate, a),
            CliCommand::Verify(a) => (Command::Verify, a),
        };
        RunConfig {
            command,
            model_path: a.model,
            eps_grid: a.eps,
            s_grid: a.s,
            n_samples: a.samples,
            seed: a.seed,
            format: a.format,
            trace: a.trace,
            start: a.start,
            csv: a.csv,
        }
    }
}

/// A failed run: exit code and diagnostic.
struct Failure(i32, String);

fn precondition(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_PRECONDITION, e.to_string())
}

fn load(path: &PathBuf) -> Result<SemiMarkovModel, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure(EXIT_IO, format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Failure(EXIT_VALIDATION, format!("{}: {e}", path.display())))
}

fn require_structure(m: &SemiMarkovModel) -> Result<(), Failure> {
    let report = validate_model(m);
    if report.structural_pass() {
        Ok(())
    } else {
        let mut witnesses = report.condition_b.witnesses.clone();
        witnesses.extend(report.stochastic_rows.witnesses.iter().cloned());
        Err(Failure(
            EXIT_VALIDATION,
            format!("model fails the structural conditions: {}", witnesses.join("; ")),
        ))
    }
}

fn analyzed(m: &SemiMarkovModel) -> Result<(ReductionTrace, HittingResult), Failure> {
    require_structure(m)?;
    let trace = reduce(m).map_err(precondition)?;
    let result = analyze_trace(&trace, m).map_err(precondition)?;
    Ok((trace, result))
}

fn hitting_json(r: &HittingResult) -> Value {
    let entries: Vec<Value> = r
        .entries
        .values()
        .map(|e| {
            json!({
                "from": e.from,
                "to": e.to,
                "psi": e.psi,
                "psi_closed_form": e.psi.closed_form(),
                "conditional_closed_form": e.conditional.closed_form(),
                "check_v": e.check_v,
                "check_v_leading": e.check_v.leading().ok(),
                "hit_prob": format_rational(&e.hit_prob),
                "switch_index": e.switch_index,
            })
        })
        .collect();
    json!({ "entries": entries })
}

fn expect_json(r: &HittingResult) -> Value {
    let mut v = r.to_json();
    v["entries"] = Value::Array(
        r.entries
            .values()
            .map(|e| {
                json!({
                    "from": e.from,
                    "to": e.to,
                    "bar_v": e.bar_v,
                    "bar_v_leading": e.bar_v.leading().ok(),
                    "bar_E": format_rational(&e.bar_e),
                    "E_under_check_v": e.e_under_check.as_ref().map(ToString::to_string),
                    "moment_match": e.moment_match,
                })
            })
            .collect(),
    );
    v
}

fn leading_text(f: &crate::asymptotics::ComparableFn) -> String {
    f.leading().map(|m| m.to_string()).unwrap_or_else(|_| "0".into())
}

fn hitting_text(r: &HittingResult) -> String {
    let mut out = String::new();
    for e in r.entries.values() {
        let _ = writeln!(out, "{} -> {}", e.from, e.to);
        let _ = writeln!(out, "  Psi(s)       = {}", e.psi.closed_form());
        let _ = writeln!(out, "  conditional  = {}", e.conditional.closed_form());
        let _ = writeln!(out, "  hit prob     = {}", format_rational(&e.hit_prob));
        let _ = writeln!(out, "  check v      ~ {}", leading_text(&e.check_v));
        if let Some(k) = e.switch_index {
            let _ = writeln!(out, "  switch index = {k}");
        }
    }
    out
}

fn expect_text(r: &HittingResult) -> String {
    let mut out = String::new();
    for e in r.entries.values() {
        let under = e
            .e_under_check
            .as_ref()
            .map(ToString::to_string)
            .unwrap_or_else(|| "indeterminate".into());
        let _ = writeln!(out, "{} -> {}", e.from, e.to);
        let _ = writeln!(out, "  bar v        ~ {}", leading_text(&e.bar_v));
        let _ = writeln!(out, "  bar E        = {}", format_rational(&e.bar_e));
        let _ = writeln!(out, "  E / check v -> {under}");
        let _ = writeln!(out, "  moment match = {}", e.moment_match);
    }
    for (&(i, l), w) in &r.u_bar {
        let via = if i == l { "own".to_string() } else { format!("via {}", r.labels[l]) };
        let _ = writeln!(out, "u_bar[{} {via}] = {}", r.labels[i], format_rational(w));
    }
    out
}

fn emit(cfg: &RunConfig, out: &mut dyn Write, json: Value, text: impl FnOnce() -> String) -> Result<(), Failure> {
    let body = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&json).expect("json serializes") + "\n",
        Format::Text => text(),
    };
    out.write_all(body.as_bytes())
        .map_err(|e| Failure(EXIT_IO, format!("stdout: {e}")))
}

fn simulate(cfg: &RunConfig, m: &SemiMarkovModel, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    require_structure(m)?;
    let start = match &cfg.start {
        Some(label) => m
            .index_of(label)
            .ok_or_else(|| Failure(EXIT_VALIDATION, format!("--start: unknown state `{label}`")))?,
        None => m.exterior()[0],
    };
    if m.in_domain(start) {
        return Err(Failure(EXIT_VALIDATION, format!("--start: `{}` is in the domain", m.label(start))));
    }
    let eps = cfg.eps_grid[0];
    let normalization = match analyzed(m) {
        Ok((_, r)) => {
            let e = &r.entries[&(start, m.domain()[0])];
            e.check_v.eval(eps).map_err(precondition)?
        }
        Err(Failure(_, msg)) => {
            let _ = writeln!(err, "warning: no limiting normalization ({msg}); times are unscaled");
            1.0
        }
    };
    let fm = FixedEpsModel::from_model(m, eps).map_err(precondition)?;
    let samples = simulate_hitting(&fm, start, cfg.n_samples, cfg.seed).map_err(precondition)?;
    if let Some(path) = &cfg.csv {
        let mut file = fs::File::create(path)
            .map_err(|e| Failure(EXIT_IO, format!("{}: {e}", path.display())))?;
        write_samples_csv(&mut file, &fm.labels, &samples)
            .map_err(|e| Failure(EXIT_IO, format!("{}: {e}", path.display())))?;
    }
    let stats = SimulationStats::new(&fm, start, cfg.seed, &samples, normalization, &cfg.s_grid);
    let psi = exact_laplace(&fm, 0.0).map_err(precondition)?;
    let expect = exact_expectation(&fm).map_err(precondition)?;
    let exact_mean: f64 = m.domain().iter().map(|&j| expect[&(start, j)]).sum::<f64>() / normalization;
    let mut exact_transform = Vec::new();
    for &s in &cfg.s_grid {
        let v = exact_laplace(&fm, s / normalization).map_err(precondition)?;
        exact_transform.push((s, m.domain().iter().map(|&j| v[&(start, j)]).sum::<f64>()));
    }
    let exact_json = json!({
        "mean": exact_mean,
        "transform": exact_transform,
        "hit_prob": m.domain().iter().map(|&j| (m.label(j), psi[&(start, j)])).collect::<std::collections::BTreeMap<_, _>>(),
    });
    emit(cfg, out, json!({"simulation": stats, "exact": exact_json}), || {
        let mut t = stats.to_text();
        let _ = writeln!(t, "exact mean    {exact_mean:.6}");
        for (s, v) in &exact_transform {
            let _ = writeln!(t, "exact transform at {s}  {v:.6}");
        }
        t
    })?;
    Ok(EXIT_OK)
}

fn verify(cfg: &RunConfig, m: &SemiMarkovModel, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let conditions = validate_model(m);
    if !conditions.all_pass() {
        let _ = writeln!(err, "warning: not every condition holds; continuing with the structural checks");
    }
    let (_, result) = analyzed(m)?;
    let report = convergence_check(m, &result, &cfg.eps_grid, &cfg.s_grid).map_err(precondition)?;
    let limits: Vec<Value> = result
        .entries
        .values()
        .map(|e| {
            json!({
                "from": e.from,
                "to": e.to,
                "psi_closed_form": e.psi.closed_form(),
                "bar_E": format_rational(&e.bar_e),
            })
        })
        .collect();
    emit(
        cfg,
        out,
        json!({"conditions": conditions, "limits": limits, "convergence": report}),
        || {
            let mut t = String::new();
            for e in result.entries.values() {
                let _ = writeln!(t, "Psi[{} -> {}](s) = {}", e.from, e.to, e.psi.closed_form());
                let _ = writeln!(t, "bar E[{} -> {}] = {}", e.from, e.to, format_rational(&e.bar_e));
            }
            t + &report.to_text()
        },
    )?;
    Ok(if report.pass { EXIT_OK } else { EXIT_VALIDATION })
}

fn dispatch(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    cfg.check().map_err(|e| Failure(EXIT_VALIDATION, e))?;
    let m = load(&cfg.model_path)?;
    match cfg.command {
        Command::Validate => {
            let report = validate_model(&m);
            emit(cfg, out, json!(report), || {
                let rows = [
                    ("condition A", &report.condition_a),
                    ("condition B", &report.condition_b),
                    ("limit atoms", &report.condition_db),
                    ("stochastic rows", &report.stochastic_rows),
                    ("family", &report.family_membership),
                    ("normalization", &report.normalization),
                ];
                let mut t = String::new();
                for (name, c) in rows {
                    let _ = writeln!(t, "{name:<16} {}", if c.pass { "pass" } else { "FAIL" });
                    for w in &c.witnesses {
                        let _ = writeln!(t, "  {w}");
                    }
                }
                t
            })?;
            Ok(if report.all_pass() { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Reduce => {
            require_structure(&m)?;
            let trace = reduce(&m).map_err(precondition)?;
            let json = if cfg.trace { trace.to_json() } else { trace.summary_json() };
            emit(cfg, out, json, || {
                let order = trace.order();
                let names: Vec<&str> = order.iter().map(|&i| m.label(i)).collect();
                let last = trace.last();
                format!(
                    "exclusion order: {}\nfinal state: {} with normalization ~ {}\n",
                    names.join(", "),
                    m.label(trace.final_state),
                    leading_text(&last.norm[&trace.final_state]),
                )
            })?;
            Ok(EXIT_OK)
        }
        Command::Hitting => {
            let (_, r) = analyzed(&m)?;
            emit(cfg, out, hitting_json(&r), || hitting_text(&r))?;
            Ok(EXIT_OK)
        }
        Command::Expect => {
            let (_, r) = analyzed(&m)?;
            emit(cfg, out, expect_json(&r), || expect_text(&r))?;
            Ok(EXIT_OK)
        }
        Command::Simulate => simulate(cfg, &m, out, err),
        Command::Verify => verify(cfg, &m, out, err),
    }
}

/// Runs one command, writing the report to `out` and diagnostics to `err`.
pub fn run(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cfg, out, err) {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

/// Parses `args` and runs against the process streams.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = RunConfig::from(cli);
    run(&cfg, &mut io::stdout().lock(), &mut io::stderr().lock())
}
