//! The system kinds, their input format, and builtin fixtures.
//!
//! A system file is a TOML document carrying the kind, the maximal distance
//! `top`, evaluation parameters, the state space and kind-specific
//! transition rows. Unknown keys are rejected everywhere. See the grammar
//! in the crate README; `builtin_examples` returns ready-made instances of
//! every kind.

use std::collections::BTreeSet;

use crate::ext::Top;
use crate::lift::MachineEval;
use crate::metric::PseudometricMatrix;
use crate::transport::FiniteDistribution;
use crate::{Error, Result, EPS_NUM};

/// Reserved target name marking termination in probabilistic transition
/// systems. User states may not use it.
pub const DONE: &str = "DONE";

/// A purely probabilistic transition system: each state moves to a
/// distribution over states extended with the terminal marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Pts {
    pub states: Vec<String>,
    /// Discount in `]0, 1]` applied to successor distances.
    pub discount: f64,
    /// Row per state over `states + [DONE]`; the last entry is the
    /// termination weight. Rows are proper distributions.
    pub transition: Vec<Vec<f64>>,
}

/// A deterministic automaton with accepting states.
#[derive(Debug, Clone, PartialEq)]
pub struct Dfa {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub accept: Vec<bool>,
    /// `next[state][letter]` is the unique successor.
    pub next: Vec<Vec<usize>>,
    pub discount: f64,
}

/// A deterministic machine with real-valued outputs in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMachine {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub output: Vec<f64>,
    pub next: Vec<Vec<usize>>,
    pub eval: MachineEval,
}

/// One proposition of a metric transition system: a finite metric space of
/// truth values.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposition {
    pub name: String,
    /// Distance table over the proposition's value names.
    pub metric: PseudometricMatrix,
}

/// A metric transition system: finitely branching transitions plus
/// per-state valuations of propositions in bounded metric spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Mts {
    pub states: Vec<String>,
    pub propositions: Vec<Proposition>,
    /// `valuation[state][prop]` indexes into the proposition's carrier.
    pub valuation: Vec<Vec<usize>>,
    pub successors: Vec<BTreeSet<usize>>,
}

/// A nondeterministic finite automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct Nfa {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub accept: Vec<bool>,
    /// `next[state][letter]` is a finite set of successors.
    pub next: Vec<Vec<BTreeSet<usize>>>,
    pub discount: f64,
}

/// A probabilistic automaton: real outputs and distribution-valued
/// successors.
#[derive(Debug, Clone, PartialEq)]
pub struct Pa {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub output: Vec<f64>,
    /// `next[state][letter]` is a proper distribution over states.
    pub next: Vec<Vec<FiniteDistribution>>,
    pub c1: f64,
    pub c2: f64,
}

/// A validated finite coalgebra of one of the supported kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    Pts(Pts),
    Dfa(Dfa),
    RealMachine(RealMachine),
    Mts(Mts),
    Nfa(Nfa),
    Pa(Pa),
}

impl SystemSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SystemSpec::Pts(_) => "pts",
            SystemSpec::Dfa(_) => "dfa",
            SystemSpec::RealMachine(_) => "real-machine",
            SystemSpec::Mts(_) => "mts",
            SystemSpec::Nfa(_) => "nfa",
            SystemSpec::Pa(_) => "pa",
        }
    }

    pub fn states(&self) -> &[String] {
        match self {
            SystemSpec::Pts(s) => &s.states,
            SystemSpec::Dfa(s) => &s.states,
            SystemSpec::RealMachine(s) => &s.states,
            SystemSpec::Mts(s) => &s.states,
            SystemSpec::Nfa(s) => &s.states,
            SystemSpec::Pa(s) => &s.states,
        }
    }

    /// The maximal distance the system's pseudometrics live under.
    pub fn top(&self) -> Top {
        match self {
            SystemSpec::Mts(_) => Top::Inf,
            _ => Top::One,
        }
    }
}

// ---------------------------------------------------------------------------
// Raw document schema
// ---------------------------------------------------------------------------

#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    kind: String,
    top: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<RawParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alphabet: Option<Vec<String>>,
    states: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transitions: Option<toml::Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    propositions: Option<Vec<RawProposition>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    valuations: Option<toml::Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    successors: Option<toml::Table>,
}

#[derive(Debug, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProposition {
    name: String,
    elements: Vec<String>,
    metric: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parses and validates a system document.
pub fn parse_system(text: &str) -> Result<SystemSpec> {
    let raw: RawSystem = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let top = match raw.top.as_str() {
        "1" => Top::One,
        "inf" => Top::Inf,
        other => return Err(Error::Parse(format!("top must be \"1\" or \"inf\", got {other:?}"))),
    };

    let states = raw.states.clone();
    if states.is_empty() {
        return Err(Error::Invariant("a system needs at least one state".into()));
    }
    let mut seen = BTreeSet::new();
    for s in &states {
        if s == DONE {
            return Err(Error::Invariant(format!("state name {DONE:?} is reserved")));
        }
        if !seen.insert(s.clone()) {
            return Err(Error::Invariant(format!("duplicate state {s:?}")));
        }
    }
    let state_index = |name: &str| -> Result<usize> {
        states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Invariant(format!("unknown state {name:?}")))
    };

    match raw.kind.as_str() {
        "pts" => {
            require_top(top, Top::One, "pts")?;
            let c = require_discount(&raw.params, "pts")?;
            let table = require_transitions(&raw)?;
            let n = states.len();
            let mut transition = Vec::with_capacity(n);
            for state in &states {
                let row = table_row(table, state)?;
                let row = row.as_table().ok_or_else(|| {
                    Error::Parse(format!("transitions.{state} must be a table of weights"))
                })?;
                let mut weights = vec![0.0; n + 1];
                for (target, value) in row {
                    let w = value.as_float().or_else(|| value.as_integer().map(|i| i as f64));
                    let w = w.ok_or_else(|| {
                        Error::Parse(format!("weight for {state} -> {target} must be a number"))
                    })?;
                    let idx = if target == DONE { n } else { state_index(target)? };
                    weights[idx] += w;
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > EPS_NUM {
                    return Err(Error::Invariant(format!(
                        "transition row of {state} sums to {total}, expected 1"
                    )));
                }
                if weights.iter().any(|&w| w < 0.0) {
                    return Err(Error::Invariant(format!(
                        "negative transition weight at state {state}"
                    )));
                }
                transition.push(weights);
            }
            Ok(SystemSpec::Pts(Pts { states, discount: c, transition }))
        }
        "dfa" => {
            require_top(top, Top::One, "dfa")?;
            let c = require_discount(&raw.params, "dfa")?;
            let alphabet = require_alphabet(&raw)?;
            let table = require_transitions(&raw)?;
            let mut accept = Vec::new();
            let mut next = Vec::new();
            for state in &states {
                let row = table_row(table, state)?;
                let row = row.as_table().ok_or_else(|| {
                    Error::Parse(format!("transitions.{state} must be a table"))
                })?;
                reject_unknown_row_keys(row, state, &alphabet, &["accept"])?;
                let acc = row
                    .get("accept")
                    .and_then(|v| v.as_bool())
                    .ok_or_else(|| Error::Parse(format!("state {state} needs accept = true|false")))?;
                accept.push(acc);
                let mut succs = Vec::with_capacity(alphabet.len());
                for letter in &alphabet {
                    let target = row.get(letter).and_then(|v| v.as_str()).ok_or_else(|| {
                        Error::Invariant(format!("state {state} has no successor for {letter:?}"))
                    })?;
                    succs.push(state_index(target)?);
                }
                next.push(succs);
            }
            Ok(SystemSpec::Dfa(Dfa { states, alphabet, accept, next, discount: c }))
        }
        "real-machine" => {
            let alphabet = require_alphabet(&raw)?;
            let eval = machine_params(&raw.params, top)?;
            let table = require_transitions(&raw)?;
            let mut output = Vec::new();
            let mut next = Vec::new();
            for state in &states {
                let row = table_row(table, state)?;
                let row = row.as_table().ok_or_else(|| {
                    Error::Parse(format!("transitions.{state} must be a table"))
                })?;
                reject_unknown_row_keys(row, state, &alphabet, &["output"])?;
                let o = row
                    .get("output")
                    .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                    .ok_or_else(|| Error::Parse(format!("state {state} needs a numeric output")))?;
                if !(0.0..=1.0).contains(&o) {
                    return Err(Error::Invariant(format!(
                        "output of {state} must lie in [0,1], got {o}"
                    )));
                }
                output.push(o);
                let mut succs = Vec::with_capacity(alphabet.len());
                for letter in &alphabet {
                    let target = row.get(letter).and_then(|v| v.as_str()).ok_or_else(|| {
                        Error::Invariant(format!("state {state} has no successor for {letter:?}"))
                    })?;
                    succs.push(state_index(target)?);
                }
                next.push(succs);
            }
            Ok(SystemSpec::RealMachine(RealMachine { states, alphabet, output, next, eval }))
        }
        "mts" => {
            require_top(top, Top::Inf, "mts")?;
            require_no_params(&raw.params, "mts")?;
            let raw_props = raw
                .propositions
                .as_ref()
                .ok_or_else(|| Error::Parse("mts needs a [[propositions]] list".into()))?;
            if raw_props.is_empty() {
                return Err(Error::Invariant("mts needs at least one proposition".into()));
            }
            let mut propositions = Vec::new();
            for p in raw_props {
                // Proposition spaces must be bounded even though the system
                // top is infinite.
                for row in &p.metric {
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Invariant(format!(
                            "proposition {} has an unbounded metric",
                            p.name
                        )));
                    }
                }
                let metric =
                    PseudometricMatrix::new(p.elements.clone(), Top::Inf, &p.metric)?;
                propositions.push(Proposition { name: p.name.clone(), metric });
            }
            let vals = raw
                .valuations
                .as_ref()
                .ok_or_else(|| Error::Parse("mts needs a [valuations] table".into()))?;
            let succ_table = raw
                .successors
                .as_ref()
                .ok_or_else(|| Error::Parse("mts needs a [successors] table".into()))?;
            let mut valuation = Vec::new();
            let mut successors = Vec::new();
            for state in &states {
                let row = table_row(vals, state)?;
                let row = row.as_table().ok_or_else(|| {
                    Error::Parse(format!("valuations.{state} must be a table"))
                })?;
                for key in row.keys() {
                    if !propositions.iter().any(|p| &p.name == key) {
                        return Err(Error::Parse(format!(
                            "unknown proposition {key:?} in valuation of {state}"
                        )));
                    }
                }
                let mut per_prop = Vec::new();
                for p in &propositions {
                    let elem = row.get(&p.name).and_then(|v| v.as_str()).ok_or_else(|| {
                        Error::Invariant(format!(
                            "state {state} has no valuation for proposition {}",
                            p.name
                        ))
                    })?;
                    per_prop.push(p.metric.index_of(elem)?);
                }
                valuation.push(per_prop);

                let succ = table_row(succ_table, state)?;
                let succ = succ.as_array().ok_or_else(|| {
                    Error::Parse(format!("successors.{state} must be an array of states"))
                })?;
                let mut set = BTreeSet::new();
                for v in succ {
                    let name = v.as_str().ok_or_else(|| {
                        Error::Parse(format!("successors of {state} must be state names"))
                    })?;
                    set.insert(state_index(name)?);
                }
                successors.push(set);
            }
            Ok(SystemSpec::Mts(Mts { states, propositions, valuation, successors }))
        }
        "nfa" => {
            require_top(top, Top::One, "nfa")?;
            let c = require_discount(&raw.params, "nfa")?;
            let alphabet = require_alphabet(&raw)?;
            let table = require_transitions(&raw)?;
            let mut accept = Vec::new();
            let mut next = Vec::new();
            for state in &states {
                let row = table_row(table, state)?;
                let row = row.as_table().ok_or_else(|| {
                    Error::Parse(format!("transitions.{state} must be a table"))
                })?;
                reject_unknown_row_keys(row, state, &alphabet, &["accept"])?;
                let acc = row
                    .get("accept")
                    .and_then(|v| v.as_bool())
                    .ok_or_else(|| Error::Parse(format!("state {state} needs accept = true|false")))?;
                accept.push(acc);
                let mut succs = Vec::with_capacity(alphabet.len());
                for letter in &alphabet {
                    let mut set = BTreeSet::new();
                    if let Some(v) = row.get(letter) {
                        let arr = v.as_array().ok_or_else(|| {
                            Error::Parse(format!(
                                "successors of {state} under {letter:?} must be an array"
                            ))
                        })?;
                        for t in arr {
                            let name = t.as_str().ok_or_else(|| {
                                Error::Parse(format!(
                                    "successors of {state} must be state names"
                                ))
                            })?;
                            set.insert(state_index(name)?);
                        }
                    }
                    succs.push(set);
                }
                next.push(succs);
            }
            Ok(SystemSpec::Nfa(Nfa { states, alphabet, accept, next, discount: c }))
        }
        "pa" => {
            require_top(top, Top::One, "pa")?;
            let (c1, c2) = require_two_discounts(&raw.params, "pa")?;
            let alphabet = require_alphabet(&raw)?;
            let table = require_transitions(&raw)?;
            let n = states.len();
            let mut output = Vec::new();
            let mut next = Vec::new();
            for state in &states {
                let row = table_row(table, state)?;
                let row = row.as_table().ok_or_else(|| {
                    Error::Parse(format!("transitions.{state} must be a table"))
                })?;
                reject_unknown_row_keys(row, state, &alphabet, &["output"])?;
                let o = row
                    .get("output")
                    .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                    .ok_or_else(|| Error::Parse(format!("state {state} needs a numeric output")))?;
                if !(0.0..=1.0).contains(&o) {
                    return Err(Error::Invariant(format!(
                        "output of {state} must lie in [0,1], got {o}"
                    )));
                }
                output.push(o);
                let mut succs = Vec::with_capacity(alphabet.len());
                for letter in &alphabet {
                    let dist = row.get(letter).and_then(|v| v.as_table()).ok_or_else(|| {
                        Error::Invariant(format!(
                            "state {state} has no distribution for {letter:?}"
                        ))
                    })?;
                    let mut weights = vec![0.0; n];
                    for (target, value) in dist {
                        let w = value
                            .as_float()
                            .or_else(|| value.as_integer().map(|i| i as f64))
                            .ok_or_else(|| {
                                Error::Parse(format!(
                                    "weight for {state} -{letter}-> {target} must be a number"
                                ))
                            })?;
                        weights[state_index(target)?] += w;
                    }
                    succs.push(FiniteDistribution::proper(weights)?);
                }
                next.push(succs);
            }
            Ok(SystemSpec::Pa(Pa { states, alphabet, output, next, c1, c2 }))
        }
        other => Err(Error::Parse(format!("unknown system kind {other:?}"))),
    }
}

fn require_top(actual: Top, required: Top, kind: &str) -> Result<()> {
    if actual != required {
        return Err(Error::Invariant(format!(
            "kind {kind} requires top = {required}, got {actual}"
        )));
    }
    Ok(())
}

fn require_transitions(raw: &RawSystem) -> Result<&toml::Table> {
    raw.transitions
        .as_ref()
        .ok_or_else(|| Error::Parse("missing [transitions] table".into()))
}

fn require_alphabet(raw: &RawSystem) -> Result<Vec<String>> {
    let alphabet = raw
        .alphabet
        .clone()
        .ok_or_else(|| Error::Parse("missing alphabet".into()))?;
    if alphabet.is_empty() {
        return Err(Error::Invariant("alphabet must be nonempty".into()));
    }
    let mut seen = BTreeSet::new();
    for a in &alphabet {
        if a == "accept" || a == "output" {
            return Err(Error::Invariant(format!("letter name {a:?} is reserved")));
        }
        if !seen.insert(a.clone()) {
            return Err(Error::Invariant(format!("duplicate letter {a:?}")));
        }
    }
    Ok(alphabet)
}

fn table_row<'t>(table: &'t toml::Table, state: &str) -> Result<&'t toml::Value> {
    table
        .get(state)
        .ok_or_else(|| Error::Invariant(format!("missing row for state {state}")))
}

fn reject_unknown_row_keys(
    row: &toml::Table,
    state: &str,
    alphabet: &[String],
    extra: &[&str],
) -> Result<()> {
    for key in row.keys() {
        if !extra.contains(&key.as_str()) && !alphabet.iter().any(|a| a == key) {
            return Err(Error::Parse(format!("unknown key {key:?} in row of state {state}")));
        }
    }
    Ok(())
}

fn require_no_params(params: &Option<RawParams>, kind: &str) -> Result<()> {
    if let Some(p) = params {
        if p.c.is_some() || p.c1.is_some() || p.c2.is_some() || p.mode.is_some() {
            return Err(Error::Parameter(format!("kind {kind} takes no parameters")));
        }
    }
    Ok(())
}

fn require_discount(params: &Option<RawParams>, kind: &str) -> Result<f64> {
    let p = params
        .as_ref()
        .ok_or_else(|| Error::Parse(format!("kind {kind} needs params {{ c }}")))?;
    if p.c1.is_some() || p.c2.is_some() || p.mode.is_some() {
        return Err(Error::Parameter(format!("kind {kind} takes only the parameter c")));
    }
    let c = p
        .c
        .ok_or_else(|| Error::Parse(format!("kind {kind} needs params {{ c }}")))?;
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Parameter(format!("discount c must lie in ]0,1], got {c}")));
    }
    Ok(c)
}

fn require_two_discounts(params: &Option<RawParams>, kind: &str) -> Result<(f64, f64)> {
    let p = params
        .as_ref()
        .ok_or_else(|| Error::Parse(format!("kind {kind} needs params {{ c1, c2 }}")))?;
    if p.c.is_some() || p.mode.is_some() {
        return Err(Error::Parameter(format!("kind {kind} takes only c1 and c2")));
    }
    let (c1, c2) = match (p.c1, p.c2) {
        (Some(c1), Some(c2)) => (c1, c2),
        _ => return Err(Error::Parse(format!("kind {kind} needs params {{ c1, c2 }}"))),
    };
    if !(c1 > 0.0 && c1 < 1.0 && c2 > 0.0 && c2 < 1.0) {
        return Err(Error::Parameter(format!(
            "weights must lie in ]0,1[, got c1 = {c1}, c2 = {c2}"
        )));
    }
    if c1 + c2 > 1.0 + EPS_NUM {
        return Err(Error::Parameter(format!(
            "weights must satisfy c1 + c2 <= 1, got {}",
            c1 + c2
        )));
    }
    Ok((c1, c2))
}

fn machine_params(params: &Option<RawParams>, top: Top) -> Result<MachineEval> {
    let p = params
        .as_ref()
        .ok_or_else(|| Error::Parse("real-machine needs params { c1, c2 }".into()))?;
    if p.c.is_some() {
        return Err(Error::Parameter("real-machine takes c1 and c2, not c".into()));
    }
    let (c1, c2) = match (p.c1, p.c2) {
        (Some(c1), Some(c2)) => (c1, c2),
        _ => return Err(Error::Parse("real-machine needs params { c1, c2 }".into())),
    };
    let eval = match p.mode.as_deref().unwrap_or("avg") {
        "avg" => MachineEval::AvgSum { c1, c2 },
        "max" => MachineEval::DiscountedMax { c1, c2 },
        "sum" => MachineEval::Sum { c1, c2 },
        other => {
            return Err(Error::Parameter(format!(
                "mode must be max, avg or sum, got {other:?}"
            )))
        }
    };
    eval.validate(top)?;
    Ok(eval)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Renders a system back into its document form. Parsing the output yields
/// the same value.
pub fn serialize_system(sys: &SystemSpec) -> String {
    let raw = to_raw(sys);
    toml::to_string_pretty(&raw).expect("system documents always serialize")
}

fn to_raw(sys: &SystemSpec) -> RawSystem {
    let mut raw = RawSystem {
        kind: sys.kind_name().to_string(),
        top: sys.top().to_string(),
        params: None,
        alphabet: None,
        states: sys.states().to_vec(),
        transitions: None,
        propositions: None,
        valuations: None,
        successors: None,
    };
    let number = toml::Value::Float;
    match sys {
        SystemSpec::Pts(p) => {
            raw.params = Some(RawParams { c: Some(p.discount), ..Default::default() });
            let mut table = toml::Table::new();
            for (i, state) in p.states.iter().enumerate() {
                let mut row = toml::Table::new();
                for (j, &w) in p.transition[i].iter().enumerate() {
                    if w > 0.0 {
                        let target =
                            if j == p.states.len() { DONE.to_string() } else { p.states[j].clone() };
                        row.insert(target, number(w));
                    }
                }
                table.insert(state.clone(), toml::Value::Table(row));
            }
            raw.transitions = Some(table);
        }
        SystemSpec::Dfa(d) => {
            raw.params = Some(RawParams { c: Some(d.discount), ..Default::default() });
            raw.alphabet = Some(d.alphabet.clone());
            let mut table = toml::Table::new();
            for (i, state) in d.states.iter().enumerate() {
                let mut row = toml::Table::new();
                row.insert("accept".into(), toml::Value::Boolean(d.accept[i]));
                for (k, letter) in d.alphabet.iter().enumerate() {
                    row.insert(
                        letter.clone(),
                        toml::Value::String(d.states[d.next[i][k]].clone()),
                    );
                }
                table.insert(state.clone(), toml::Value::Table(row));
            }
            raw.transitions = Some(table);
        }
        SystemSpec::RealMachine(m) => {
            let (c1, c2, mode) = match m.eval {
                MachineEval::AvgSum { c1, c2 } => (c1, c2, "avg"),
                MachineEval::DiscountedMax { c1, c2 } => (c1, c2, "max"),
                MachineEval::Sum { c1, c2 } => (c1, c2, "sum"),
            };
            raw.params = Some(RawParams {
                c1: Some(c1),
                c2: Some(c2),
                mode: Some(mode.into()),
                ..Default::default()
            });
            raw.alphabet = Some(m.alphabet.clone());
            let mut table = toml::Table::new();
            for (i, state) in m.states.iter().enumerate() {
                let mut row = toml::Table::new();
                row.insert("output".into(), number(m.output[i]));
                for (k, letter) in m.alphabet.iter().enumerate() {
                    row.insert(
                        letter.clone(),
                        toml::Value::String(m.states[m.next[i][k]].clone()),
                    );
                }
                table.insert(state.clone(), toml::Value::Table(row));
            }
            raw.transitions = Some(table);
        }
        SystemSpec::Mts(m) => {
            raw.propositions = Some(
                m.propositions
                    .iter()
                    .map(|p| RawProposition {
                        name: p.name.clone(),
                        elements: p.metric.carrier().to_vec(),
                        metric: (0..p.metric.len())
                            .map(|i| {
                                (0..p.metric.len())
                                    .map(|j| p.metric.get(i, j).value())
                                    .collect()
                            })
                            .collect(),
                    })
                    .collect(),
            );
            let mut vals = toml::Table::new();
            let mut succ = toml::Table::new();
            for (i, state) in m.states.iter().enumerate() {
                let mut row = toml::Table::new();
                for (pi, p) in m.propositions.iter().enumerate() {
                    row.insert(
                        p.name.clone(),
                        toml::Value::String(p.metric.carrier()[m.valuation[i][pi]].clone()),
                    );
                }
                vals.insert(state.clone(), toml::Value::Table(row));
                succ.insert(
                    state.clone(),
                    toml::Value::Array(
                        m.successors[i]
                            .iter()
                            .map(|&j| toml::Value::String(m.states[j].clone()))
                            .collect(),
                    ),
                );
            }
            raw.valuations = Some(vals);
            raw.successors = Some(succ);
        }
        SystemSpec::Nfa(a) => {
            raw.params = Some(RawParams { c: Some(a.discount), ..Default::default() });
            raw.alphabet = Some(a.alphabet.clone());
            let mut table = toml::Table::new();
            for (i, state) in a.states.iter().enumerate() {
                let mut row = toml::Table::new();
                row.insert("accept".into(), toml::Value::Boolean(a.accept[i]));
                for (k, letter) in a.alphabet.iter().enumerate() {
                    row.insert(
                        letter.clone(),
                        toml::Value::Array(
                            a.next[i][k]
                                .iter()
                                .map(|&j| toml::Value::String(a.states[j].clone()))
                                .collect(),
                        ),
                    );
                }
                table.insert(state.clone(), toml::Value::Table(row));
            }
            raw.transitions = Some(table);
        }
        SystemSpec::Pa(p) => {
            raw.params = Some(RawParams {
                c1: Some(p.c1),
                c2: Some(p.c2),
                ..Default::default()
            });
            raw.alphabet = Some(p.alphabet.clone());
            let mut table = toml::Table::new();
            for (i, state) in p.states.iter().enumerate() {
                let mut row = toml::Table::new();
                row.insert("output".into(), number(p.output[i]));
                for (k, letter) in p.alphabet.iter().enumerate() {
                    let mut dist = toml::Table::new();
                    for (j, &w) in p.next[i][k].weights().iter().enumerate() {
                        if w > 0.0 {
                            dist.insert(p.states[j].clone(), number(w));
                        }
                    }
                    row.insert(letter.clone(), toml::Value::Table(dist));
                }
                table.insert(state.clone(), toml::Value::Table(row));
            }
            raw.transitions = Some(table);
        }
    }
    raw
}

// ---------------------------------------------------------------------------
// Builtin fixtures
// ---------------------------------------------------------------------------

/// The four-state probabilistic system with a biased and an unbiased state:
/// `x` reaches the fail state with probability `1/2 - eps`, `y` with `1/2`.
pub fn fig2_pts(eps: f64, discount: f64) -> Pts {
    let states = vec!["x".into(), "y".into(), "u".into(), "z".into()];
    // Columns: x, y, u, z, DONE.
    let transition = vec![
        vec![0.0, 0.0, 0.5 - eps, 0.5 + eps, 0.0],
        vec![0.0, 0.0, 0.5, 0.5, 0.0],
        vec![0.0, 0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.0, 1.0],
    ];
    Pts { states, discount, transition }
}

/// The six-state metric transition system with one `[0,1]`-valued
/// proposition.
pub fn fig4_mts() -> Mts {
    let values = ["0", "0.4", "0.5", "0.7", "1"];
    let reals: Vec<f64> = values.iter().map(|v| v.parse().unwrap()).collect();
    let table: Vec<Vec<f64>> = reals
        .iter()
        .map(|a| reals.iter().map(|b| (a - b).abs()).collect())
        .collect();
    let metric = PseudometricMatrix::new(
        values.iter().map(|s| s.to_string()).collect(),
        Top::Inf,
        &table,
    )
    .unwrap();
    let states: Vec<String> =
        ["x1", "x2", "x3", "y1", "y2", "y3"].iter().map(|s| s.to_string()).collect();
    let value_index = |v: &str| values.iter().position(|&x| x == v).unwrap();
    let valuation = vec![
        vec![value_index("0")],
        vec![value_index("0.4")],
        vec![value_index("0.7")],
        vec![value_index("0")],
        vec![value_index("0.5")],
        vec![value_index("1")],
    ];
    let successors = vec![
        BTreeSet::from([1, 2]),
        BTreeSet::from([1]),
        BTreeSet::from([2]),
        BTreeSet::from([4, 5]),
        BTreeSet::from([4]),
        BTreeSet::from([5]),
    ];
    Mts {
        states,
        propositions: vec![Proposition { name: "r".into(), metric }],
        valuation,
        successors,
    }
}

/// A single-letter automaton whose states `p` and `q` first differ on the
/// two-letter word `aa`.
pub fn dfa_word2(discount: f64) -> Dfa {
    let states: Vec<String> = ["p", "q", "m", "f"].iter().map(|s| s.to_string()).collect();
    Dfa {
        states,
        alphabet: vec!["a".into()],
        accept: vec![false, false, false, true],
        // p -> m -> f(accept, loops); q loops.
        next: vec![vec![2], vec![1], vec![3], vec![3]],
        discount,
    }
}

/// A three-state nondeterministic automaton whose states `s` and `t` first
/// differ on the word `ab`.
pub fn nfa_ab(discount: f64) -> Nfa {
    let states: Vec<String> = ["s", "t", "f"].iter().map(|s| s.to_string()).collect();
    Nfa {
        states,
        alphabet: vec!["a".into(), "b".into()],
        accept: vec![false, false, true],
        next: vec![
            vec![BTreeSet::new(), BTreeSet::from([2])],
            vec![BTreeSet::from([1]), BTreeSet::from([2])],
            vec![BTreeSet::new(), BTreeSet::new()],
        ],
        discount,
    }
}

/// A three-state single-letter probabilistic automaton with drifting
/// outputs.
pub fn pa_line(c1: f64, c2: f64) -> Pa {
    let states: Vec<String> = ["g0", "g1", "g2"].iter().map(|s| s.to_string()).collect();
    Pa {
        states,
        alphabet: vec!["a".into()],
        output: vec![0.0, 0.5, 1.0],
        next: vec![
            vec![FiniteDistribution::proper(vec![0.0, 0.8, 0.2]).unwrap()],
            vec![FiniteDistribution::proper(vec![0.0, 0.0, 1.0]).unwrap()],
            vec![FiniteDistribution::proper(vec![0.0, 0.0, 1.0]).unwrap()],
        ],
        c1,
        c2,
    }
}

/// Every named builtin fixture, each of which passes `parse_system` after
/// a serialization round trip.
pub fn builtin_examples() -> Vec<(&'static str, SystemSpec)> {
    vec![
        ("fig2-pts", SystemSpec::Pts(fig2_pts(0.1, 0.9))),
        ("fig4-mts", SystemSpec::Mts(fig4_mts())),
        ("dfa-word2", SystemSpec::Dfa(dfa_word2(0.5))),
        ("nfa-ab", SystemSpec::Nfa(nfa_ab(0.5))),
        ("pa-line", SystemSpec::Pa(pa_line(0.4, 0.4))),
    ]
}

/// Looks up a builtin fixture by name.
pub fn builtin(name: &str) -> Result<SystemSpec> {
    builtin_examples()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| s)
        .ok_or_else(|| Error::Unknown(format!("no builtin example named {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_fig2_document() {
        let text = r#"
            kind = "pts"
            top = "1"
            params = { c = 0.9 }
            states = ["x", "y", "u", "z"]

            [transitions]
            x = { u = 0.4, z = 0.6 }
            y = { u = 0.5, z = 0.5 }
            u = { u = 1.0 }
            z = { DONE = 1.0 }
        "#;
        let sys = parse_system(text).unwrap();
        let SystemSpec::Pts(p) = sys else { panic!("expected pts") };
        assert_eq!(p.states, vec!["x", "y", "u", "z"]);
        assert!((p.transition[0][2] - 0.4).abs() < 1e-12);
        assert!((p.transition[3][4] - 1.0).abs() < 1e-12);
        assert_eq!(SystemSpec::Pts(p), SystemSpec::Pts(fig2_pts(0.1, 0.9)));
    }

    #[test]
    fn pts_row_must_sum_to_one() {
        let text = r#"
            kind = "pts"
            top = "1"
            params = { c = 0.9 }
            states = ["x"]
            [transitions]
            x = { x = 0.9 }
        "#;
        let err = parse_system(text).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)), "{err}");
    }

    #[test]
    fn unknown_kind_and_trailing_keys_rejected() {
        let err = parse_system("kind = \"petri\"\ntop = \"1\"\nstates = [\"x\"]").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        let err = parse_system(
            "kind = \"pts\"\ntop = \"1\"\nstates = [\"x\"]\nbogus = 3\n[transitions]\nx = { x = 1.0 }",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_system("kind = \"pts\"\ntop = ").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "no position info in {msg:?}");
    }

    #[test]
    fn reserved_state_name_rejected() {
        let text = r#"
            kind = "pts"
            top = "1"
            params = { c = 0.5 }
            states = ["DONE"]
            [transitions]
            DONE = { DONE = 1.0 }
        "#;
        assert!(parse_system(text).is_err());
    }

    #[test]
    fn builtin_examples_round_trip() {
        for (name, sys) in builtin_examples() {
            let text = serialize_system(&sys);
            let parsed = parse_system(&text)
                .unwrap_or_else(|e| panic!("builtin {name} failed to re-parse: {e}\n{text}"));
            assert_eq!(parsed, sys, "round trip changed {name}");
        }
    }

    #[test]
    fn fig4_document_matches_fixture() {
        let text = serialize_system(&SystemSpec::Mts(fig4_mts()));
        let SystemSpec::Mts(m) = parse_system(&text).unwrap() else { panic!() };
        assert_eq!(m.states.len(), 6);
        assert_eq!(m.propositions.len(), 1);
        let metric = &m.propositions[0].metric;
        let i04 = metric.index_of("0.4").unwrap();
        let i05 = metric.index_of("0.5").unwrap();
        assert!(metric.get(i04, i05).approx_eq(crate::ext::ExtReal::raw(0.1)));
    }

    #[test]
    fn dfa_requires_total_transitions() {
        let text = r#"
            kind = "dfa"
            top = "1"
            params = { c = 0.5 }
            alphabet = ["a", "b"]
            states = ["p"]
            [transitions]
            p = { accept = false, a = "p" }
        "#;
        let err = parse_system(text).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)), "{err}");
    }

    #[test]
    fn pa_rows_must_be_proper() {
        let text = r#"
            kind = "pa"
            top = "1"
            params = { c1 = 0.4, c2 = 0.4 }
            alphabet = ["a"]
            states = ["p", "q"]
            [transitions]
            p = { output = 0.5, a = { q = 0.5 } }
            q = { output = 0.0, a = { q = 1.0 } }
        "#;
        assert!(parse_system(text).is_err());
    }
}
