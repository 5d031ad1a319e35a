//! Determinization and trace pseudometrics.
//!
//! Nondeterministic automata determinize by the subset construction; their
//! trace distance is `c^n` for the shortest word on which the languages of
//! the two singleton subsets differ. Probabilistic automata determinize
//! into belief states (distributions over states) explored lazily along
//! words; their trace distance is a discounted sum of output differences
//! over all words, truncated at a depth with a proven tail bound.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::ext::{ExtReal, ZERO};
use crate::systems::{Dfa, Nfa, Pa};
use crate::transport::FiniteDistribution;
use crate::{Error, Result, EPS_NUM};

/// Largest NFA carrier the subset construction accepts.
const MAX_NFA_STATES: usize = 20;

/// Cap on simultaneously tracked belief-state pairs.
const MAX_BELIEF_PAIRS: usize = 200_000;

/// Subset automaton of an NFA, restricted to subsets reachable from the
/// singletons.
#[derive(Debug, Clone)]
pub struct DeterminizedNfa {
    /// Bitmask per subset state, indexed by subset id.
    pub subsets: Vec<u32>,
    /// Display name per subset, like `{s,t}`.
    pub labels: Vec<String>,
    pub accept: Vec<bool>,
    /// `next[subset][letter]` is a subset id.
    pub next: Vec<Vec<usize>>,
    /// Subset id of each original state's singleton.
    pub singleton: Vec<usize>,
    pub alphabet: Vec<String>,
    pub discount: f64,
}

impl DeterminizedNfa {
    /// Views the subset automaton as a deterministic automaton.
    pub fn as_dfa(&self) -> Dfa {
        Dfa {
            states: self.labels.clone(),
            alphabet: self.alphabet.clone(),
            accept: self.accept.clone(),
            next: self.next.clone(),
            discount: self.discount,
        }
    }
}

fn subset_label(mask: u32, states: &[String]) -> String {
    let names: Vec<&str> = (0..states.len())
        .filter(|&i| mask >> i & 1 == 1)
        .map(|i| states[i].as_str())
        .collect();
    format!("{{{}}}", names.join(","))
}

/// Subset construction over all singletons: outputs are `true` when some
/// member accepts, successors are unions of member successors.
pub fn determinize_nfa(nfa: &Nfa) -> Result<DeterminizedNfa> {
    let n = nfa.states.len();
    if n > MAX_NFA_STATES {
        return Err(Error::TooLarge(format!(
            "subset construction supports up to {MAX_NFA_STATES} states, got {n}"
        )));
    }
    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut subsets: Vec<u32> = Vec::new();
    let mut queue = VecDeque::new();
    let mut singleton = Vec::with_capacity(n);
    for x in 0..n {
        let mask = 1u32 << x;
        let id = *index.entry(mask).or_insert_with(|| {
            subsets.push(mask);
            queue.push_back(mask);
            subsets.len() - 1
        });
        singleton.push(id);
    }
    let mut next: Vec<Vec<usize>> = Vec::new();
    let mut accept: Vec<bool> = Vec::new();
    // Process in insertion order; `next` rows line up with subset ids.
    while let Some(mask) = queue.pop_front() {
        let acc = (0..n).any(|x| mask >> x & 1 == 1 && nfa.accept[x]);
        let mut row = Vec::with_capacity(nfa.alphabet.len());
        for a in 0..nfa.alphabet.len() {
            let mut target = 0u32;
            for x in 0..n {
                if mask >> x & 1 == 1 {
                    for &y in &nfa.next[x][a] {
                        target |= 1 << y;
                    }
                }
            }
            let id = *index.entry(target).or_insert_with(|| {
                subsets.push(target);
                queue.push_back(target);
                subsets.len() - 1
            });
            row.push(id);
        }
        accept.push(acc);
        next.push(row);
    }
    let labels = subsets.iter().map(|&m| subset_label(m, &nfa.states)).collect();
    Ok(DeterminizedNfa {
        subsets,
        labels,
        accept,
        next,
        singleton,
        alphabet: nfa.alphabet.clone(),
        discount: nfa.discount,
    })
}

/// Trace distance between two NFA states together with a shortest
/// distinguishing word when one exists.
#[derive(Debug, Clone)]
pub struct NfaTraceResult {
    pub distance: ExtReal,
    /// `None` exactly when the languages coincide; the distance is then
    /// exactly zero (decided by exhausting all reachable subset pairs).
    pub witness: Option<Vec<String>>,
}

/// Trace distance `c^n` where `n` is the length of the shortest word
/// accepted from exactly one of the singleton subsets `{x}` and `{y}`.
pub fn trace_metric_nfa(nfa: &Nfa, x: usize, y: usize, c: f64) -> Result<NfaTraceResult> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Parameter(format!(
            "trace distance needs a discount in ]0,1[, got {c}"
        )));
    }
    let det = determinize_nfa(nfa)?;
    let (sx, sy) = (det.singleton[x], det.singleton[y]);
    // Breadth-first search on subset pairs, remembering the word that
    // reached each pair.
    let m = det.subsets.len();
    let mut seen = vec![false; m * m];
    let mut frontier: Vec<(usize, usize, Vec<usize>)> = vec![(sx, sy, Vec::new())];
    seen[sx * m + sy] = true;
    while !frontier.is_empty() {
        for (p, q, word) in &frontier {
            if det.accept[*p] != det.accept[*q] {
                let letters =
                    word.iter().map(|&a| det.alphabet[a].clone()).collect::<Vec<_>>();
                return Ok(NfaTraceResult {
                    distance: ExtReal::raw(c.powi(word.len() as i32)),
                    witness: Some(letters),
                });
            }
        }
        let mut next_frontier = Vec::new();
        for (p, q, word) in frontier {
            for a in 0..det.alphabet.len() {
                let pair = (det.next[p][a], det.next[q][a]);
                if !seen[pair.0 * m + pair.1] {
                    seen[pair.0 * m + pair.1] = true;
                    let mut w = word.clone();
                    w.push(a);
                    next_frontier.push((pair.0, pair.1, w));
                }
            }
        }
        frontier = next_frontier;
    }
    Ok(NfaTraceResult { distance: ZERO, witness: None })
}

/// One step of a belief state: the expected output of the current belief
/// and the successor belief after reading `letter`.
pub fn pa_belief_step(
    pa: &Pa,
    belief: &FiniteDistribution,
    letter: usize,
) -> Result<(f64, FiniteDistribution)> {
    if belief.len() != pa.states.len() {
        return Err(Error::CarrierMismatch("belief over a different state space".into()));
    }
    let output = belief_output(pa, belief);
    let n = pa.states.len();
    let mut weights = vec![0.0; n];
    for x in 0..n {
        let w = belief.weight(x);
        if w == 0.0 {
            continue;
        }
        for (y, wy) in pa.next[x][letter].weights().iter().enumerate() {
            weights[y] += w * wy;
        }
    }
    Ok((output, FiniteDistribution::proper(weights)?))
}

/// Expected output of a belief state.
pub fn belief_output(pa: &Pa, belief: &FiniteDistribution) -> f64 {
    (0..pa.states.len()).map(|x| belief.weight(x) * pa.output[x]).sum()
}

/// Trace distance between two PA states, within `tol` of the full
/// discounted series.
#[derive(Debug, Clone)]
pub struct PaTraceResult {
    pub distance: ExtReal,
    /// Word length up to which the series was summed.
    pub depth: usize,
    /// Upper bound on the truncated tail.
    pub tail_bound: f64,
}

/// Discounted sum over all words of the output difference between the two
/// Dirac beliefs, truncated at the smallest depth whose geometric tail
/// bound drops below `tol`. Belief pairs are deduplicated by weight-vector
/// equality at the numeric tolerance, which is sound because words reaching
/// equal belief pairs contribute identically.
pub fn trace_metric_pa(
    pa: &Pa,
    x: usize,
    y: usize,
    c1: f64,
    c2: f64,
    tol: f64,
) -> Result<PaTraceResult> {
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
    if tol <= 0.0 {
        return Err(Error::Parameter("tolerance must be positive".into()));
    }
    // Depth-n words contribute at most c1 * c2^n in total, so the tail
    // beyond depth k is bounded by c1 * c2^(k+1) / (1 - c2).
    let mut depth = 0usize;
    while c1 * c2.powi(depth as i32 + 1) / (1.0 - c2) > tol {
        depth += 1;
    }

    let n = pa.states.len();
    let key = |b: &FiniteDistribution| -> Vec<u64> {
        b.weights().iter().map(|w| (w / EPS_NUM).round() as u64).collect()
    };
    // Ordered keys keep the floating-point reduction identical from run
    // to run.
    type Layer = BTreeMap<(Vec<u64>, Vec<u64>), (FiniteDistribution, FiniteDistribution, f64)>;
    let mut layer: Layer = BTreeMap::new();
    let bx = FiniteDistribution::dirac(n, x);
    let by = FiniteDistribution::dirac(n, y);
    layer.insert((key(&bx), key(&by)), (bx, by, 1.0));

    let mut total = 0.0f64;
    let per_letter = c2 / pa.alphabet.len() as f64;
    for _ in 0..=depth {
        for (b1, b2, mass) in layer.values() {
            let gap = (belief_output(pa, b1) - belief_output(pa, b2)).abs();
            total += c1 * mass * gap;
        }
        let mut next_layer: Layer = BTreeMap::new();
        for (b1, b2, mass) in layer.values() {
            for a in 0..pa.alphabet.len() {
                let (_, n1) = pa_belief_step(pa, b1, a)?;
                let (_, n2) = pa_belief_step(pa, b2, a)?;
                let entry = next_layer
                    .entry((key(&n1), key(&n2)))
                    .or_insert_with(|| (n1, n2, 0.0));
                entry.2 += mass * per_letter;
            }
        }
        if next_layer.len() > MAX_BELIEF_PAIRS {
            return Err(Error::TooLarge(format!(
                "belief-state exploration exceeded {MAX_BELIEF_PAIRS} pairs"
            )));
        }
        layer = next_layer;
    }
    let tail_bound = c1 * c2.powi(depth as i32 + 1) / (1.0 - c2);
    Ok(PaTraceResult { distance: ExtReal::raw(total), depth, tail_bound })
}
