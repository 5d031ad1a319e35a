//! Kleene iteration computing the behavioral pseudometric of a finite
//! system: start from the zero pseudometric and repeatedly push it through
//! the system's lifted transition structure until the sup-norm delta falls
//! below the tolerance.
//!
//! Every iterate is evaluated against the previous matrix on all state
//! pairs (Jacobi style), so results are independent of evaluation order.

use crate::ext::{ExtReal, Top, ZERO};
use crate::lift::{self};
use crate::metric::{self, PseudometricMatrix};
use crate::systems::{Dfa, Mts, Pts, RealMachine, SystemSpec};
use crate::transport::{self, FiniteDistribution};
use crate::{Error, Result, EPS_NUM};

/// Iteration controls.
#[derive(Debug, Clone)]
pub struct FixpointConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub record_trace: bool,
}

impl Default for FixpointConfig {
    fn default() -> Self {
        FixpointConfig { tolerance: 1e-9, max_iterations: 10_000, record_trace: false }
    }
}

impl FixpointConfig {
    fn validate(&self) -> Result<()> {
        if self.tolerance < EPS_NUM {
            return Err(Error::Parameter(format!(
                "tolerance {} is below the numeric tolerance {EPS_NUM}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Result of the iteration. When `converged` is false the metric is the
/// last iterate, returned as-is rather than silently truncated.
#[derive(Debug, Clone)]
pub struct FixpointResult {
    pub metric: PseudometricMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta: ExtReal,
    pub trace: Option<Vec<ExtReal>>,
}

/// Computes the bisimilarity pseudometric of a system by fixed-point
/// iteration of its kind's lifting.
pub fn bisim_metric(system: &SystemSpec, config: &FixpointConfig) -> Result<FixpointResult> {
    config.validate()?;
    match system {
        SystemSpec::Pts(p) => iterate(p.states.clone(), Top::One, config, PtsStep::new(p)?),
        SystemSpec::Dfa(d) => iterate(d.states.clone(), Top::One, config, DfaStep { dfa: d }),
        SystemSpec::RealMachine(m) => {
            iterate(m.states.clone(), Top::One, config, MachineStep { machine: m })
        }
        SystemSpec::Mts(m) => iterate(m.states.clone(), Top::Inf, config, MtsStep::new(m)),
        other => Err(Error::Parameter(format!(
            "no bisimilarity lifting registered for kind {}; use the trace distance instead",
            other.kind_name()
        ))),
    }
}

trait Step {
    fn apply(&self, prev: &PseudometricMatrix, next: &mut PseudometricMatrix) -> Result<()>;
}

fn iterate(
    states: Vec<String>,
    top: Top,
    config: &FixpointConfig,
    step: impl Step,
) -> Result<FixpointResult> {
    let mut current = PseudometricMatrix::zero(states.clone(), top);
    let mut trace = if config.record_trace { Some(Vec::new()) } else { None };
    let mut delta = top.max_dist();
    for iteration in 1..=config.max_iterations {
        let mut next = PseudometricMatrix::zero(states.clone(), top);
        step.apply(&current, &mut next)?;
        delta = metric::sup_norm_diff(&current, &next)?;
        if let Some(t) = trace.as_mut() {
            t.push(delta);
        }
        current = next;
        if delta.value() <= config.tolerance {
            return Ok(FixpointResult {
                metric: current,
                iterations: iteration,
                converged: true,
                final_delta: delta,
                trace,
            });
        }
    }
    Ok(FixpointResult {
        metric: current,
        iterations: config.max_iterations,
        converged: false,
        final_delta: delta,
        trace,
    })
}

/// Probabilistic systems step: transport distance between transition
/// distributions over the state space extended with the terminal marker,
/// using discounted state distances and maximal distance to termination.
struct PtsStep<'a> {
    pts: &'a Pts,
    rows: Vec<FiniteDistribution>,
}

impl<'a> PtsStep<'a> {
    fn new(pts: &'a Pts) -> Result<Self> {
        let rows = pts
            .transition
            .iter()
            .map(|w| FiniteDistribution::proper(w.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(PtsStep { pts, rows })
    }
}

impl Step for PtsStep<'_> {
    fn apply(&self, prev: &PseudometricMatrix, next: &mut PseudometricMatrix) -> Result<()> {
        let n = self.pts.states.len();
        let c = self.pts.discount;
        // Ground space: states plus the terminal marker. Distances between
        // states are discounted; reaching the marker differs maximally from
        // not reaching it.
        let mut carrier = self.pts.states.clone();
        carrier.push(crate::systems::DONE.to_string());
        let ground = PseudometricMatrix::from_fn(carrier, Top::One, |i, j| {
            if i < n && j < n {
                prev.get(i, j).scale(c)
            } else {
                ExtReal::raw(1.0)
            }
        });
        for x in 0..n {
            for y in (x + 1)..n {
                let cost =
                    transport::solve_transport(&ground, &self.rows[x], &self.rows[y])?.cost;
                next.set_sym(x, y, cost);
            }
        }
        Ok(())
    }
}

/// Deterministic automata step: output mismatch is maximal, successor
/// distances are discounted and folded by max.
struct DfaStep<'a> {
    dfa: &'a Dfa,
}

impl Step for DfaStep<'_> {
    fn apply(&self, prev: &PseudometricMatrix, next: &mut PseudometricMatrix) -> Result<()> {
        let d = self.dfa;
        for x in 0..d.states.len() {
            for y in (x + 1)..d.states.len() {
                let out = if d.accept[x] != d.accept[y] {
                    ExtReal::raw(1.0)
                } else {
                    ZERO
                };
                let succ = (0..d.alphabet.len())
                    .map(|a| prev.get(d.next[x][a], d.next[y][a]))
                    .fold(ZERO, ExtReal::max);
                next.set_sym(x, y, out.max(succ.scale(d.discount)));
            }
        }
        Ok(())
    }
}

/// Real-output machine step: the configured machine evaluation over the
/// Euclidean output gap and the successor distances.
struct MachineStep<'a> {
    machine: &'a RealMachine,
}

impl Step for MachineStep<'_> {
    fn apply(&self, prev: &PseudometricMatrix, next: &mut PseudometricMatrix) -> Result<()> {
        let m = self.machine;
        for x in 0..m.states.len() {
            for y in (x + 1)..m.states.len() {
                let gap = ExtReal::raw((m.output[x] - m.output[y]).abs());
                let succ = (0..m.alphabet.len()).map(|a| prev.get(m.next[x][a], m.next[y][a]));
                next.set_sym(x, y, lift::machine_eval(m.eval, gap, succ));
            }
        }
        Ok(())
    }
}

/// Metric transition system step: the maximum of the propositional distance
/// and the Hausdorff distance of the successor sets.
struct MtsStep<'a> {
    mts: &'a Mts,
    prop_dist: PseudometricMatrix,
}

impl<'a> MtsStep<'a> {
    fn new(mts: &'a Mts) -> Self {
        let prop_dist = PseudometricMatrix::from_fn(mts.states.clone(), Top::Inf, |x, y| {
            mts.propositions
                .iter()
                .enumerate()
                .map(|(pi, p)| p.metric.get(mts.valuation[x][pi], mts.valuation[y][pi]))
                .fold(ZERO, ExtReal::max)
        });
        MtsStep { mts, prop_dist }
    }
}

impl Step for MtsStep<'_> {
    fn apply(&self, prev: &PseudometricMatrix, next: &mut PseudometricMatrix) -> Result<()> {
        let m = self.mts;
        for x in 0..m.states.len() {
            for y in (x + 1)..m.states.len() {
                let branch = lift::hausdorff(prev, &m.successors[x], &m.successors[y])?;
                next.set_sym(x, y, self.prop_dist.get(x, y).max(branch));
            }
        }
        Ok(())
    }
}

/// Closed-form distance on a deterministic automaton: `c^n` where `n` is
/// the length of the shortest word accepted from exactly one of the two
/// states, and `0` when the languages coincide. Serves as the independent
/// oracle for the iterative route.
pub fn dfa_distance_closed_form(dfa: &Dfa, x: usize, y: usize, c: f64) -> Result<ExtReal> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Parameter(format!(
            "closed form needs a discount in ]0,1[, got {c}"
        )));
    }
    match shortest_distinguishing_length(dfa, x, y) {
        Some(n) => Ok(ExtReal::raw(c.powi(n as i32))),
        None => Ok(ZERO),
    }
}

/// Breadth-first search on the product automaton for the length of the
/// shortest distinguishing word, `None` when the states accept the same
/// language.
pub fn shortest_distinguishing_length(dfa: &Dfa, x: usize, y: usize) -> Option<usize> {
    let mut seen = vec![false; dfa.states.len() * dfa.states.len()];
    let mut frontier = vec![(x, y)];
    seen[x * dfa.states.len() + y] = true;
    let mut depth = 0;
    while !frontier.is_empty() {
        for &(p, q) in &frontier {
            if dfa.accept[p] != dfa.accept[q] {
                return Some(depth);
            }
        }
        let mut next_frontier = Vec::new();
        for &(p, q) in &frontier {
            for a in 0..dfa.alphabet.len() {
                let pair = (dfa.next[p][a], dfa.next[q][a]);
                let key = pair.0 * dfa.states.len() + pair.1;
                if !seen[key] {
                    seen[key] = true;
                    next_frontier.push(pair);
                }
            }
        }
        frontier = next_frontier;
        depth += 1;
    }
    None
}

/// Whether two states of a deterministic automaton accept the same
/// language, by product-automaton reachability.
pub fn dfa_language_equal(dfa: &Dfa, x: usize, y: usize) -> bool {
    shortest_distinguishing_length(dfa, x, y).is_none()
}

/// Largest contraction ratio `delta_{i+1} / delta_i` observed along a
/// recorded trace; useful for checking discounted liftings contract.
pub fn contraction_ratio(trace: &[ExtReal]) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for w in trace.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.is_infinite() || a.value() <= EPS_NUM {
            continue;
        }
        let ratio = (b.value() - EPS_NUM).max(0.0) / a.value();
        worst = Some(worst.map_or(ratio, |r: f64| r.max(ratio)));
    }
    worst
}

/// Convenience wrapper returning the fixed-point distance between two named
/// states.
pub fn state_distance(result: &FixpointResult, x: &str, y: &str) -> Result<ExtReal> {
    let i = result.metric.index_of(x)?;
    let j = result.metric.index_of(y)?;
    Ok(result.metric.get(i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{self, SystemSpec};

    #[test]
    fn biased_pts_distances() {
        let sys = SystemSpec::Pts(systems::fig2_pts(0.1, 0.9));
        let result = bisim_metric(&sys, &FixpointConfig::default()).unwrap();
        assert!(result.converged);
        assert!(result.iterations <= 250);
        let duz = state_distance(&result, "u", "z").unwrap();
        assert!((duz.value() - 1.0).abs() < 1e-12, "d(u,z) = {duz}");
        let dxy = state_distance(&result, "x", "y").unwrap();
        assert!((dxy.value() - 0.09).abs() < 1e-8, "d(x,y) = {dxy}");
    }

    #[test]
    fn undiscounted_pts_distances() {
        let sys = SystemSpec::Pts(systems::fig2_pts(0.1, 1.0));
        let result = bisim_metric(&sys, &FixpointConfig::default()).unwrap();
        assert!(result.converged);
        let dxy = state_distance(&result, "x", "y").unwrap();
        assert!((dxy.value() - 0.1).abs() < 1e-8, "d(x,y) = {dxy}");
    }

    #[test]
    fn branching_mts_distances() {
        let sys = SystemSpec::Mts(systems::fig4_mts());
        let result = bisim_metric(&sys, &FixpointConfig::default()).unwrap();
        assert!(result.converged);
        assert!(result.iterations <= 10);
        assert_eq!(result.final_delta, ZERO);
        for (x, y, want) in [
            ("x2", "y2", 0.1),
            ("x2", "y3", 0.6),
            ("x3", "y2", 0.2),
            ("x3", "y3", 0.3),
            ("x1", "y1", 0.3),
        ] {
            let got = state_distance(&result, x, y).unwrap();
            assert!(
                (got.value() - want).abs() < 1e-9,
                "d({x},{y}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn dfa_closed_form_and_iteration_agree() {
        let dfa = systems::dfa_word2(0.5);
        let sys = SystemSpec::Dfa(dfa.clone());
        let result = bisim_metric(&sys, &FixpointConfig::default()).unwrap();
        assert!(result.converged);
        let p = 0;
        let q = 1;
        let closed = dfa_distance_closed_form(&dfa, p, q, 0.5).unwrap();
        assert!(closed.approx_eq(ExtReal::raw(0.25)), "closed = {closed}");
        assert!(result.metric.get(p, q).approx_eq(closed));
        // Identical states and self-distances.
        assert_eq!(dfa_distance_closed_form(&dfa, p, p, 0.5).unwrap(), ZERO);
    }

    #[test]
    fn word2_fixture_matches_language_enumeration() {
        // Brute-force the languages to depth 4: the shortest word accepted
        // from exactly one of p, q must have length 2.
        let dfa = systems::dfa_word2(0.5);
        let accepts = |start: usize, word: &[usize]| -> bool {
            let mut s = start;
            for &a in word {
                s = dfa.next[s][a];
            }
            dfa.accept[s]
        };
        let mut shortest = None;
        'depth: for len in 0..=4usize {
            // Single letter alphabet: one word per length.
            let word = vec![0usize; len];
            if accepts(0, &word) != accepts(1, &word) {
                shortest = Some(len);
                break 'depth;
            }
        }
        assert_eq!(shortest, Some(2));
        let closed = dfa_distance_closed_form(&dfa, 0, 1, 0.5).unwrap();
        assert!(closed.approx_eq(ExtReal::raw(0.25)));
    }

    #[test]
    fn accepting_vs_rejecting_self_loops() {
        let dfa = Dfa {
            states: vec!["p".into(), "q".into()],
            alphabet: vec!["a".into()],
            accept: vec![true, false],
            next: vec![vec![0], vec![1]],
            discount: 0.5,
        };
        let closed = dfa_distance_closed_form(&dfa, 0, 1, 0.5).unwrap();
        assert!(closed.approx_eq(ExtReal::raw(1.0)));
        let result =
            bisim_metric(&SystemSpec::Dfa(dfa), &FixpointConfig::default()).unwrap();
        assert!(result.metric.get(0, 1).approx_eq(ExtReal::raw(1.0)));
    }

    #[test]
    fn real_machine_geometric_fixpoint() {
        // Two self-looping states with outputs 0.9 and 0.4: the distance
        // solves d = c1 * 0.5 + c2 * d, so d = 0.2 / 0.6 = 1/3.
        let machine = RealMachine {
            states: vec!["a".into(), "b".into()],
            alphabet: vec!["l".into()],
            output: vec![0.9, 0.4],
            next: vec![vec![0], vec![1]],
            eval: crate::lift::MachineEval::AvgSum { c1: 0.4, c2: 0.4 },
        };
        let result = bisim_metric(
            &SystemSpec::RealMachine(machine),
            &FixpointConfig::default(),
        )
        .unwrap();
        assert!(result.converged);
        let d = result.metric.get(0, 1);
        assert!((d.value() - 1.0 / 3.0).abs() < 1e-8, "d = {d}");
    }

    #[test]
    fn iterates_are_pseudometrics_and_ascend() {
        let sys = SystemSpec::Pts(systems::fig2_pts(0.2, 0.8));
        let SystemSpec::Pts(p) = &sys else { unreachable!() };
        let step = PtsStep::new(p).unwrap();
        let mut current = PseudometricMatrix::zero(p.states.clone(), Top::One);
        for _ in 0..12 {
            let mut next = PseudometricMatrix::zero(p.states.clone(), Top::One);
            step.apply(&current, &mut next).unwrap();
            assert!(next.is_pseudometric());
            assert!(current.le(&next), "iteration must ascend");
            current = next;
        }
    }

    #[test]
    fn discounted_iteration_contracts() {
        let sys = SystemSpec::Pts(systems::fig2_pts(0.1, 0.9));
        let config = FixpointConfig { record_trace: true, ..Default::default() };
        let result = bisim_metric(&sys, &config).unwrap();
        let trace = result.trace.unwrap();
        if let Some(ratio) = contraction_ratio(&trace) {
            assert!(ratio <= 0.9 + 1e-6, "contraction ratio {ratio}");
        }
        let bound = (1e-9f64.ln() / 0.9f64.ln()).ceil() as usize + 2;
        assert!(result.iterations <= bound, "{} > {bound}", result.iterations);
    }

    #[test]
    fn non_convergence_is_reported() {
        // An undiscounted real-machine that flips outputs never stabilizes
        // within one iteration's tolerance if stopped immediately.
        let sys = SystemSpec::Pts(systems::fig2_pts(0.1, 0.9));
        let config = FixpointConfig { max_iterations: 1, ..Default::default() };
        let result = bisim_metric(&sys, &config).unwrap();
        assert!(!result.converged);
        assert!(result.final_delta.value() > 1e-9);
    }

    #[test]
    fn single_state_system() {
        let pts = Pts {
            states: vec!["only".into()],
            discount: 0.9,
            transition: vec![vec![1.0, 0.0]],
        };
        let result =
            bisim_metric(&SystemSpec::Pts(pts), &FixpointConfig::default()).unwrap();
        assert!(result.converged);
        assert_eq!(result.metric.len(), 1);
        assert_eq!(result.metric.get(0, 0), ZERO);
    }

    #[test]
    fn trace_kind_is_rejected() {
        let sys = SystemSpec::Nfa(systems::nfa_ab(0.5));
        assert!(bisim_metric(&sys, &FixpointConfig::default()).is_err());
    }
}
