//! Command-line front end: solve transport instances, compute bisimilarity
//! and trace pseudometrics of system files, evaluate single lifted
//! distances, and run the verification checks.
//!
//! Exit codes: 0 success/pass, 1 input error, 2 non-convergence,
//! 3 property violation.

use std::collections::BTreeSet;
use std::io::Read;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use bdist::ext::{ExtReal, Top};
use bdist::fixpoint::{self, FixpointConfig};
use bdist::lift::{self, InputMode, MachineElem, MachineEval, OutputDist, ProductEval, Side};
use bdist::metric::PseudometricMatrix;
use bdist::systems::{self, SystemSpec};
use bdist::trace;
use bdist::transport::{self, FiniteDistribution};
use bdist::verify;

#[derive(Parser)]
#[command(name = "bdist", version, about = "Behavioral pseudometrics on finite systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a finite optimal transport instance (see README for the file
    /// format; "-" reads from stdin).
    Transport {
        file: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Expected maximal distance; rejected if the file disagrees.
        #[arg(long)]
        top: Option<String>,
    },
    /// Compute the bisimilarity pseudometric of a system file.
    Bisim {
        file: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        /// Record the per-iteration sup-norm deltas.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        top: Option<String>,
    },
    /// Compute the trace distance between two states of an NFA or PA file.
    Trace {
        file: String,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// Series truncation tolerance (probabilistic automata only).
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        top: Option<String>,
    },
    /// Compute one lifted distance from an inline instance file.
    Lift {
        file: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run a named verification check (or list the names).
    Check {
        name: Option<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        #[arg(long)]
        list: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// List builtin example systems, or dump one as a document.
    Examples {
        name: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

type CliResult<T> = Result<T, String>;

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Transport { file, format, top } => cmd_transport(&file, format, top.as_deref()),
        Command::Bisim { file, tol, max_iter, trace, format, top } => {
            cmd_bisim(&file, tol, max_iter, trace, format, top.as_deref())
        }
        Command::Trace { file, from, to, tol, format, top } => {
            cmd_trace(&file, &from, &to, tol, format, top.as_deref())
        }
        Command::Lift { file, format } => cmd_lift(&file, format),
        Command::Check { name, seed, budget, list, format } => {
            cmd_check(name.as_deref(), seed, budget, list, format)
        }
        Command::Examples { name, format } => cmd_examples(name.as_deref(), format),
    }
}

fn read_input(file: &str) -> CliResult<String> {
    if file == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| format!("reading stdin: {e}"))?;
        Ok(buf)
    } else {
        std::fs::read_to_string(file).map_err(|e| format!("reading {file}: {e}"))
    }
}

fn parse_top(text: &str) -> CliResult<Top> {
    match text {
        "1" => Ok(Top::One),
        "inf" => Ok(Top::Inf),
        other => Err(format!("top must be \"1\" or \"inf\", got {other:?}")),
    }
}

fn check_top_override(file_top: Top, flag: Option<&str>) -> CliResult<()> {
    if let Some(flag) = flag {
        let wanted = parse_top(flag)?;
        if wanted != file_top {
            return Err(format!(
                "--top {wanted} conflicts with the file's declared top {file_top}"
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Output documents
// ---------------------------------------------------------------------------

/// JSON number with at most 12 significant digits; infinities print as the
/// string "inf".
fn num(v: f64) -> Value {
    if v.is_infinite() {
        return Value::String("inf".into());
    }
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    serde_json::Number::from_f64(rounded).map(Value::Number).unwrap_or(Value::Null)
}

fn ext(v: ExtReal) -> Value {
    num(v.value())
}

fn matrix_value(m: &PseudometricMatrix) -> Value {
    json!({
        "carrier": m.carrier(),
        "entries": (0..m.len())
            .map(|i| (0..m.len()).map(|j| ext(m.get(i, j))).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    })
}

fn render(doc: &Value, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(doc).expect("documents serialize"),
        Format::Tsv => {
            let mut out = String::new();
            flatten_tsv(doc, "", &mut out);
            out
        }
    }
}

fn tsv_scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "null".into(),
        other => other.to_string(),
    }
}

fn flatten_tsv(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, val) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_tsv(val, &key, out);
            }
        }
        Value::Array(items) => {
            if items.iter().all(|i| !i.is_object() && !i.is_array()) {
                let row: Vec<String> = items.iter().map(tsv_scalar).collect();
                out.push_str(&format!("{prefix}\t{}\n", row.join("\t")));
            } else {
                for (i, item) in items.iter().enumerate() {
                    flatten_tsv(item, &format!("{prefix}.{i}"), out);
                }
            }
        }
        scalar => out.push_str(&format!("{prefix}\t{}\n", tsv_scalar(scalar))),
    }
}

fn emit(doc: &Value, format: Format) {
    println!("{}", render(doc, format));
}

// ---------------------------------------------------------------------------
// transport
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransportDoc {
    top: String,
    states: Vec<String>,
    metric: Vec<Vec<f64>>,
    supply: toml::Table,
    demand: toml::Table,
    #[serde(default)]
    subdistribution: bool,
}

fn weights_from_table(
    table: &toml::Table,
    states: &[String],
    what: &str,
) -> CliResult<Vec<f64>> {
    let mut weights = vec![0.0; states.len()];
    for (name, value) in table {
        let idx = states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| format!("{what} references unknown state {name:?}"))?;
        let w = value
            .as_float()
            .or_else(|| value.as_integer().map(|i| i as f64))
            .ok_or_else(|| format!("{what} weight for {name} must be a number"))?;
        weights[idx] = w;
    }
    Ok(weights)
}

fn cmd_transport(file: &str, format: Format, top: Option<&str>) -> CliResult<ExitCode> {
    let text = read_input(file)?;
    let doc: TransportDoc = toml::from_str(&text).map_err(|e| e.to_string())?;
    let file_top = parse_top(&doc.top)?;
    check_top_override(file_top, top)?;
    let d = PseudometricMatrix::new(doc.states.clone(), file_top, &doc.metric)
        .map_err(|e| e.to_string())?;
    let make = |table: &toml::Table, what: &str| -> CliResult<FiniteDistribution> {
        let weights = weights_from_table(table, &doc.states, what)?;
        FiniteDistribution::new(weights, doc.subdistribution).map_err(|e| e.to_string())
    };
    let p = make(&doc.supply, "supply")?;
    let q = make(&doc.demand, "demand")?;

    let primal = transport::solve_transport(&d, &p, &q).map_err(|e| e.to_string())?;
    let mut result = json!({
        "cost": ext(primal.cost),
    });
    match &primal.plan {
        Some(plan) => {
            result["plan"] = json!(plan
                .entries
                .iter()
                .map(|row| row.iter().map(|&w| num(w)).collect::<Vec<_>>())
                .collect::<Vec<_>>());
        }
        None => {
            result["plan"] = Value::Null;
            result["note"] = Value::String("no coupling: distance = top".into());
        }
    }
    if !doc.subdistribution {
        let dual = transport::solve_dual(&d, &p, &q).map_err(|e| e.to_string())?;
        result["dual_value"] = ext(dual.value);
        result["potential"] = json!(dual
            .potential
            .values
            .iter()
            .map(|&v| num(v))
            .collect::<Vec<_>>());
        let gap = if primal.cost.is_infinite() {
            f64::INFINITY
        } else {
            (primal.cost.value() - dual.value.value()).abs()
        };
        result["duality_gap"] = num(gap);
    } else {
        let k = lift::kantorovich_distribution(&d, &p, &q).map_err(|e| e.to_string())?;
        result["kantorovich"] = ext(k);
    }
    let out = json!({
        "command": "transport",
        "parameters": { "file": file, "subdistribution": doc.subdistribution, "top": doc.top },
        "states": doc.states,
        "result": result,
    });
    emit(&out, format);
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// bisim
// ---------------------------------------------------------------------------

fn cmd_bisim(
    file: &str,
    tol: f64,
    max_iter: usize,
    record_trace: bool,
    format: Format,
    top: Option<&str>,
) -> CliResult<ExitCode> {
    let text = read_input(file)?;
    let sys = systems::parse_system(&text).map_err(|e| e.to_string())?;
    check_top_override(sys.top(), top)?;
    let config = FixpointConfig { tolerance: tol, max_iterations: max_iter, record_trace };
    let result = fixpoint::bisim_metric(&sys, &config).map_err(|e| e.to_string())?;
    let mut doc = json!({
        "command": "bisim",
        "parameters": { "file": file, "tol": num(tol), "max_iter": max_iter, "kind": sys.kind_name() },
        "result": { "metric": matrix_value(&result.metric) },
        "metadata": {
            "iterations": result.iterations,
            "converged": result.converged,
            "final_delta": ext(result.final_delta),
        },
    });
    if let Some(trace) = &result.trace {
        doc["metadata"]["trace"] =
            json!(trace.iter().map(|&d| ext(d)).collect::<Vec<_>>());
    }
    emit(&doc, format);
    Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

fn cmd_trace(
    file: &str,
    from: &str,
    to: &str,
    tol: f64,
    format: Format,
    top: Option<&str>,
) -> CliResult<ExitCode> {
    let text = read_input(file)?;
    let sys = systems::parse_system(&text).map_err(|e| e.to_string())?;
    check_top_override(sys.top(), top)?;
    let states = sys.states();
    let index = |name: &str| -> CliResult<usize> {
        states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| format!("state {name:?} not in the system"))
    };
    let x = index(from)?;
    let y = index(to)?;
    let result = match &sys {
        SystemSpec::Nfa(nfa) => {
            let res =
                trace::trace_metric_nfa(nfa, x, y, nfa.discount).map_err(|e| e.to_string())?;
            json!({
                "distance": ext(res.distance),
                "witness": match &res.witness {
                    Some(word) => json!(word),
                    None => Value::String("none".into()),
                },
            })
        }
        SystemSpec::Pa(pa) => {
            let res = trace::trace_metric_pa(pa, x, y, pa.c1, pa.c2, tol)
                .map_err(|e| e.to_string())?;
            json!({
                "distance": ext(res.distance),
                "depth": res.depth,
                "tail_bound": num(res.tail_bound),
            })
        }
        other => {
            return Err(format!(
                "trace distances are defined for nfa and pa files, got {}",
                other.kind_name()
            ))
        }
    };
    let doc = json!({
        "command": "trace",
        "parameters": { "file": file, "from": from, "to": to, "tol": num(tol), "kind": sys.kind_name() },
        "result": result,
    });
    emit(&doc, format);
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// lift
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricTable {
    states: Vec<String>,
    entries: Vec<Vec<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LiftParams {
    c1: Option<f64>,
    c2: Option<f64>,
    p: Option<u32>,
    mode: Option<String>,
    #[serde(rename = "output-dist")]
    output_dist: Option<String>,
    h: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftDoc {
    top: String,
    functor: String,
    metric: MetricTable,
    metric2: Option<MetricTable>,
    #[serde(default)]
    params: Option<LiftParams>,
    left: toml::Table,
    right: toml::Table,
}

fn cmd_lift(file: &str, format: Format) -> CliResult<ExitCode> {
    let text = read_input(file)?;
    let doc: LiftDoc = toml::from_str(&text).map_err(|e| e.to_string())?;
    let top = parse_top(&doc.top)?;
    let d = PseudometricMatrix::new(doc.metric.states.clone(), top, &doc.metric.entries)
        .map_err(|e| e.to_string())?;
    let d2 = doc
        .metric2
        .as_ref()
        .map(|m| PseudometricMatrix::new(m.states.clone(), top, &m.entries))
        .transpose()
        .map_err(|e| e.to_string())?;
    let second = d2.as_ref().unwrap_or(&d);
    let params = doc.params.unwrap_or_default();

    let index = |m: &PseudometricMatrix, name: &str| -> CliResult<usize> {
        m.index_of(name).map_err(|e| e.to_string())
    };
    let table_str = |t: &toml::Table, key: &str| -> CliResult<String> {
        t.get(key)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| format!("element needs a string field {key:?}"))
    };

    let value = match doc.functor.as_str() {
        "distribution" | "kantorovich-distribution" => {
            let dist = |t: &toml::Table| -> CliResult<FiniteDistribution> {
                let weights = t
                    .get("weights")
                    .and_then(|v| v.as_table())
                    .ok_or("element needs a [weights] table")?;
                let sub = t.get("sub").and_then(|v| v.as_bool()).unwrap_or(false);
                let w = weights_from_table(weights, d.carrier(), "weights")?;
                FiniteDistribution::new(w, sub).map_err(|e| e.to_string())
            };
            let p = dist(&doc.left)?;
            let q = dist(&doc.right)?;
            if doc.functor == "distribution" {
                lift::wasserstein_distribution(&d, &p, &q).map_err(|e| e.to_string())?
            } else {
                lift::kantorovich_distribution(&d, &p, &q).map_err(|e| e.to_string())?
            }
        }
        "hausdorff" => {
            let set = |t: &toml::Table| -> CliResult<BTreeSet<usize>> {
                let arr = t
                    .get("set")
                    .and_then(|v| v.as_array())
                    .ok_or("element needs a `set` array")?;
                arr.iter()
                    .map(|v| {
                        v.as_str()
                            .ok_or_else(|| "set members must be state names".to_string())
                            .and_then(|s| index(&d, s))
                    })
                    .collect()
            };
            lift::hausdorff(&d, &set(&doc.left)?, &set(&doc.right)?)
                .map_err(|e| e.to_string())?
        }
        "input" => {
            let mode = match params.mode.as_deref().unwrap_or("max") {
                "max" => InputMode::Max,
                "sum" => InputMode::Sum,
                "avg" => InputMode::Avg,
                other => return Err(format!("unknown input mode {other:?}")),
            };
            let func = |t: &toml::Table| -> CliResult<Vec<(String, usize)>> {
                let map = t
                    .get("map")
                    .and_then(|v| v.as_table())
                    .ok_or("element needs a [map] table")?;
                map.iter()
                    .map(|(k, v)| {
                        v.as_str()
                            .ok_or_else(|| "map values must be state names".to_string())
                            .and_then(|s| index(&d, s))
                            .map(|i| (k.clone(), i))
                    })
                    .collect()
            };
            let s1 = func(&doc.left)?;
            let s2 = func(&doc.right)?;
            let a1: Vec<&String> = s1.iter().map(|(k, _)| k).collect();
            let a2: Vec<&String> = s2.iter().map(|(k, _)| k).collect();
            if a1 != a2 {
                return Err("input functions use different alphabets".into());
            }
            let v1: Vec<usize> = s1.iter().map(|&(_, i)| i).collect();
            let v2: Vec<usize> = s2.iter().map(|&(_, i)| i).collect();
            lift::lift_input(&d, &v1, &v2, mode).map_err(|e| e.to_string())?
        }
        "product" => {
            let c1 = params.c1.unwrap_or(1.0);
            let c2 = params.c2.unwrap_or(1.0);
            let eval = match params.mode.as_deref().unwrap_or("max") {
                "max" => ProductEval::Max { c1, c2 },
                "pnorm" => ProductEval::PNorm { c1, c2, p: params.p.unwrap_or(1) },
                other => return Err(format!("unknown product mode {other:?}")),
            };
            let pair = |t: &toml::Table| -> CliResult<(usize, usize)> {
                let arr = t
                    .get("pair")
                    .and_then(|v| v.as_array())
                    .filter(|a| a.len() == 2)
                    .ok_or("element needs `pair = [first, second]`")?;
                let first = arr[0].as_str().ok_or("pair members must be state names")?;
                let second_name = arr[1].as_str().ok_or("pair members must be state names")?;
                Ok((index(&d, first)?, index(second, second_name)?))
            };
            lift::lift_product(eval, &d, second, pair(&doc.left)?, pair(&doc.right)?)
                .map_err(|e| e.to_string())?
        }
        "coproduct" => {
            let elem = |t: &toml::Table| -> CliResult<(Side, usize)> {
                let side = match table_str(t, "side")?.as_str() {
                    "left" => Side::Left,
                    "right" => Side::Right,
                    other => return Err(format!("side must be left or right, got {other:?}")),
                };
                let value = table_str(t, "value")?;
                let m = if side == Side::Left { &d } else { second };
                Ok((side, index(m, &value)?))
            };
            lift::lift_coproduct(&d, second, elem(&doc.left)?, elem(&doc.right)?)
                .map_err(|e| e.to_string())?
        }
        "machine" => {
            let c1 = params.c1.unwrap_or(1.0);
            let c2 = params.c2.unwrap_or(1.0);
            let eval = match params.mode.as_deref().unwrap_or("max") {
                "max" => MachineEval::DiscountedMax { c1, c2 },
                "avg" => MachineEval::AvgSum { c1, c2 },
                "sum" => MachineEval::Sum { c1, c2 },
                other => return Err(format!("unknown machine mode {other:?}")),
            };
            let od = match params.output_dist.as_deref().unwrap_or("euclid") {
                "euclid" => OutputDist::Euclid,
                "discrete" => OutputDist::Discrete,
                other => return Err(format!("unknown output distance {other:?}")),
            };
            let elem = |t: &toml::Table| -> CliResult<MachineElem> {
                let output = t
                    .get("output")
                    .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                    .ok_or("element needs a numeric output")?;
                let map = t
                    .get("next")
                    .and_then(|v| v.as_table())
                    .ok_or("element needs a [next] table")?;
                let next = map
                    .values()
                    .map(|v| {
                        v.as_str()
                            .ok_or_else(|| "next values must be state names".to_string())
                            .and_then(|s| index(&d, s))
                    })
                    .collect::<CliResult<Vec<usize>>>()?;
                Ok(MachineElem { output, next })
            };
            lift::lift_machine(eval, od, &d, &elem(&doc.left)?, &elem(&doc.right)?)
                .map_err(|e| e.to_string())?
        }
        "squaring" | "squaring-kantorovich" => {
            let pair = |t: &toml::Table| -> CliResult<(usize, usize)> {
                let arr = t
                    .get("pair")
                    .and_then(|v| v.as_array())
                    .filter(|a| a.len() == 2)
                    .ok_or("element needs `pair = [first, second]`")?;
                let a = arr[0].as_str().ok_or("pair members must be state names")?;
                let b = arr[1].as_str().ok_or("pair members must be state names")?;
                Ok((index(&d, a)?, index(&d, b)?))
            };
            let t1 = pair(&doc.left)?;
            let t2 = pair(&doc.right)?;
            if doc.functor == "squaring" {
                lift::squaring_wasserstein(&d, t1, t2)
            } else {
                let h = params.h.unwrap_or(0.05);
                lift::squaring_kantorovich_oracle(&d, t1, t2, h).map_err(|e| e.to_string())?
            }
        }
        other => return Err(format!("unknown functor {other:?}")),
    };

    let doc = json!({
        "command": "lift",
        "parameters": { "file": file, "functor": doc.functor, "top": doc.top },
        "result": { "distance": ext(value) },
    });
    emit(&doc, format);
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn cmd_check(
    name: Option<&str>,
    seed: u64,
    budget: usize,
    list: bool,
    format: Format,
) -> CliResult<ExitCode> {
    if list || name.is_none() {
        let doc = json!({
            "command": "check",
            "result": { "available": verify::check_names() },
        });
        emit(&doc, format);
        return Ok(ExitCode::SUCCESS);
    }
    let name = name.unwrap();
    let report = verify::run_check(name, seed, budget).map_err(|e| e.to_string())?;
    let doc = json!({
        "command": "check",
        "parameters": { "name": name, "seed": seed, "budget": budget },
        "result": {
            "passed": report.passed(),
            "instances": report.instances,
            "violations": report.violations.iter().map(|v| json!({
                "instance": v.instance,
                "expected": v.expected,
                "observed": v.observed,
            })).collect::<Vec<_>>(),
            "notes": report.notes,
        },
    });
    emit(&doc, format);
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

// ---------------------------------------------------------------------------
// examples
// ---------------------------------------------------------------------------

fn cmd_examples(name: Option<&str>, format: Format) -> CliResult<ExitCode> {
    match name {
        None => {
            let listing: Vec<Value> = systems::builtin_examples()
                .iter()
                .map(|(name, sys)| {
                    json!({
                        "name": name,
                        "kind": sys.kind_name(),
                        "states": sys.states().len(),
                    })
                })
                .collect();
            let doc = json!({ "command": "examples", "result": { "examples": listing } });
            emit(&doc, format);
        }
        Some(name) => {
            let sys = systems::builtin(name).map_err(|e| e.to_string())?;
            // The dump is the system document itself, ready to feed back in.
            print!("{}", systems::serialize_system(&sys));
        }
    }
    Ok(ExitCode::SUCCESS)
}
