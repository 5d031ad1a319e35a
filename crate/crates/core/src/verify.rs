//! Brute-force oracles and seeded property checks.
//!
//! Everything here certifies, at desk scale, the side conditions the closed
//! forms in [`crate::lift`] rely on: well-behavedness of the evaluation
//! functions, agreement of the two lifting routes (duality), composition of
//! liftings, monad laws, and nonexpansiveness of the determinization law.
//! Sampling is driven by a fixed-seed generator so failures reproduce.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ext::{ExtReal, Top, INF, ZERO};
use crate::lift::{
    self, EvaluationSpec, FunctorElement, InputMode, MachineElem, MachineEval, OutputDist,
    ProductEval, SetEval, Side,
};
use crate::metric::PseudometricMatrix;
use crate::transport::{self, FiniteDistribution};
use crate::{Error, Result, EPS_NUM};

/// Grid step for Kantorovich oracles, one twentieth of the finite top.
pub const GRID_STEP: f64 = 0.05;

/// One observed counterexample.
#[derive(Debug, Clone)]
pub struct Violation {
    pub instance: String,
    pub expected: String,
    pub observed: String,
}

/// Outcome of one named check. Empty violations means pass.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    pub violations: Vec<Violation>,
    /// Free-form findings that are not violations (for example the size of
    /// an exhibited duality gap).
    pub notes: Vec<String>,
}

impl CheckReport {
    fn new(name: impl Into<String>) -> Self {
        CheckReport { name: name.into(), instances: 0, violations: Vec::new(), notes: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn violation(&mut self, instance: String, expected: String, observed: String) {
        if self.violations.len() < 32 {
            self.violations.push(Violation { instance, expected, observed });
        }
    }
}

// ---------------------------------------------------------------------------
// Sampling helpers
// ---------------------------------------------------------------------------

fn carrier(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// Random pseudometric with grid-valued entries: raw grid entries closed
/// under shortest paths (min-plus), which preserves the grid. With
/// `positive` set the result is a metric (no distinct points at distance
/// zero).
pub fn random_grid_metric(
    rng: &mut ChaCha8Rng,
    n: usize,
    top: Top,
    h: f64,
    positive: bool,
) -> PseudometricMatrix {
    let max_units = if top.is_finite() { (top.value() / h).round() as i64 } else { 40 };
    let lo = if positive { 1 } else { 0 };
    let mut table = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.gen_range(lo..=max_units) as f64 * h;
            table[i][j] = v;
            table[j][i] = v;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if table[i][k] + table[k][j] < table[i][j] {
                    table[i][j] = table[i][k] + table[k][j];
                }
            }
        }
    }
    PseudometricMatrix::new(carrier(n), top, &table).expect("closure yields a pseudometric")
}

fn random_grid_distribution(rng: &mut ChaCha8Rng, n: usize, h: f64) -> FiniteDistribution {
    let units = (1.0 / h).round() as usize;
    let mut weights = vec![0.0; n];
    for _ in 0..units {
        weights[rng.gen_range(0..n)] += h;
    }
    FiniteDistribution::proper(weights).expect("grid weights sum to one")
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize, max_size: usize) -> BTreeSet<usize> {
    let size = rng.gen_range(0..=max_size.min(n));
    let mut set = BTreeSet::new();
    while set.len() < size {
        set.insert(rng.gen_range(0..n));
    }
    set
}

fn random_machine_elem(
    rng: &mut ChaCha8Rng,
    n: usize,
    letters: usize,
    output_dist: OutputDist,
) -> MachineElem {
    let output = match output_dist {
        OutputDist::Discrete => {
            if rng.gen_bool(0.5) {
                1.0
            } else {
                0.0
            }
        }
        OutputDist::Euclid => rng.gen_range(0..=20) as f64 * GRID_STEP,
    };
    MachineElem { output, next: (0..letters).map(|_| rng.gen_range(0..n)).collect() }
}

fn sample_element(
    rng: &mut ChaCha8Rng,
    spec: &EvaluationSpec,
    n: usize,
    letters: usize,
    h: f64,
) -> FunctorElement {
    match spec {
        EvaluationSpec::Distribution => {
            FunctorElement::Distribution(random_grid_distribution(rng, n, h))
        }
        EvaluationSpec::Powerset(_) => FunctorElement::FiniteSet(random_subset(rng, n, 3)),
        EvaluationSpec::Input(_) => {
            FunctorElement::InputFn((0..letters).map(|_| rng.gen_range(0..n)).collect())
        }
        EvaluationSpec::Product(_) => {
            FunctorElement::Pair(rng.gen_range(0..n), rng.gen_range(0..n))
        }
        EvaluationSpec::Coproduct => {
            let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
            FunctorElement::CoproductElem(side, rng.gen_range(0..n))
        }
        EvaluationSpec::Squaring => {
            FunctorElement::SquarePair(rng.gen_range(0..n), rng.gen_range(0..n))
        }
        EvaluationSpec::Machine(_, od) => {
            FunctorElement::Machine(random_machine_elem(rng, n, letters, *od))
        }
    }
}

// ---------------------------------------------------------------------------
// Closed forms and brute-force routes
// ---------------------------------------------------------------------------

/// The closed-form lifted distance for a structure pair. The second metric
/// feeds the second component of product and coproduct structures; machine
/// output distances come from the evaluation's [`OutputDist`].
pub fn closed_form(
    spec: &EvaluationSpec,
    d: &PseudometricMatrix,
    d2: Option<&PseudometricMatrix>,
    a: &FunctorElement,
    b: &FunctorElement,
) -> Result<ExtReal> {
    let second = || d2.unwrap_or(d);
    match (spec, a, b) {
        (EvaluationSpec::Distribution, FunctorElement::Distribution(p), FunctorElement::Distribution(q)) => {
            lift::wasserstein_distribution(d, p, q)
        }
        (EvaluationSpec::Powerset(SetEval::Max), FunctorElement::FiniteSet(s), FunctorElement::FiniteSet(t)) => {
            lift::hausdorff(d, s, t)
        }
        (EvaluationSpec::Powerset(SetEval::Min), _, _) => Err(Error::InvalidValue(
            "the min evaluation is ill-behaved and has no closed-form lifting".into(),
        )),
        (EvaluationSpec::Input(mode), FunctorElement::InputFn(s), FunctorElement::InputFn(t)) => {
            lift::lift_input(d, s, t, *mode)
        }
        (EvaluationSpec::Product(eval), FunctorElement::Pair(x1, x2), FunctorElement::Pair(y1, y2)) => {
            lift::lift_product(*eval, d, second(), (*x1, *x2), (*y1, *y2))
        }
        (EvaluationSpec::Coproduct, FunctorElement::CoproductElem(sa, va), FunctorElement::CoproductElem(sb, vb)) => {
            lift::lift_coproduct(d, second(), (*sa, *va), (*sb, *vb))
        }
        (EvaluationSpec::Squaring, FunctorElement::SquarePair(a1, a2), FunctorElement::SquarePair(b1, b2)) => {
            Ok(lift::squaring_wasserstein(d, (*a1, *a2), (*b1, *b2)))
        }
        (EvaluationSpec::Machine(eval, od), FunctorElement::Machine(m1), FunctorElement::Machine(m2)) => {
            lift::lift_machine(*eval, *od, d, m1, m2)
        }
        _ => Err(Error::InvalidValue("element shapes do not match the evaluation spec".into())),
    }
}

/// Exact minimum of the evaluated cost over enumerated couplings; top when
/// no coupling exists. Distributions enumerate couplings on the grid `h`,
/// so their marginals must be grid-valued; every other structure has a
/// unique or directly enumerable coupling set.
pub fn brute_wasserstein(
    spec: &EvaluationSpec,
    d: &PseudometricMatrix,
    d2: Option<&PseudometricMatrix>,
    a: &FunctorElement,
    b: &FunctorElement,
    h: f64,
) -> Result<ExtReal> {
    match (spec, a, b) {
        (EvaluationSpec::Distribution, FunctorElement::Distribution(p), FunctorElement::Distribution(q)) => {
            if (p.mass() - q.mass()).abs() > EPS_NUM {
                return Ok(d.top().max_dist());
            }
            let couplings = transport::enumerate_grid_couplings(p.weights(), q.weights(), h)?;
            let mut best = d.top().max_dist();
            for t in &couplings {
                let mut cost = ZERO;
                for (i, row) in t.iter().enumerate() {
                    for (j, &w) in row.iter().enumerate() {
                        if w > 0.0 {
                            cost = cost + d.get(i, j).scale(w);
                        }
                    }
                }
                best = best.min(cost);
            }
            Ok(best)
        }
        (EvaluationSpec::Powerset(SetEval::Max), FunctorElement::FiniteSet(s), FunctorElement::FiniteSet(t)) => {
            let couplings = transport::enumerate_set_couplings(s, t)?;
            if couplings.is_empty() && !(s.is_empty() && t.is_empty()) {
                return Ok(d.top().max_dist());
            }
            let mut best = d.top().max_dist();
            for coupling in &couplings {
                let ev = coupling.iter().map(|&(x, y)| d.get(x, y)).fold(ZERO, ExtReal::max);
                best = best.min(ev);
            }
            if couplings.is_empty() {
                best = ZERO;
            }
            Ok(best)
        }
        (EvaluationSpec::Powerset(SetEval::Min), _, _) => Err(Error::InvalidValue(
            "transport route for the min evaluation is not supported".into(),
        )),
        // The remaining structures have a unique coupling (or none, handled
        // by the closed form), so the transport route is the closed form.
        _ => closed_form(spec, d, d2, a, b),
    }
}

/// Maximum spread over grid-valued nonexpansive test functions. Requires a
/// finite top except for the squaring structure, where only differences of
/// the test function matter and the finite diameter bounds the range.
/// Guarantee: `true - 2h <= oracle <= true`.
pub fn brute_kantorovich(
    spec: &EvaluationSpec,
    d: &PseudometricMatrix,
    d2: Option<&PseudometricMatrix>,
    a: &FunctorElement,
    b: &FunctorElement,
    h: f64,
) -> Result<ExtReal> {
    if d.len() > 5 {
        return Err(Error::TooLarge(format!(
            "test-function enumeration supports carriers up to 5, got {}",
            d.len()
        )));
    }
    let units = grid_units(d, h)?;
    let mut best = 0.0f64;
    match (spec, a, b) {
        (EvaluationSpec::Distribution, FunctorElement::Distribution(p), FunctorElement::Distribution(q)) => {
            lift::for_each_grid_nonexpansive(d, h, units, &mut |f| {
                let va: f64 = f.iter().zip(p.weights()).map(|(x, w)| x * w).sum();
                let vb: f64 = f.iter().zip(q.weights()).map(|(x, w)| x * w).sum();
                best = best.max((va - vb).abs());
            });
        }
        (EvaluationSpec::Powerset(set_eval), FunctorElement::FiniteSet(s), FunctorElement::FiniteSet(t)) => {
            let top = d.top().value();
            let fold = |set: &BTreeSet<usize>, f: &[f64]| -> f64 {
                match set_eval {
                    SetEval::Max => set.iter().map(|&i| f[i]).fold(0.0, f64::max),
                    SetEval::Min => set.iter().map(|&i| f[i]).fold(top, f64::min),
                }
            };
            lift::for_each_grid_nonexpansive(d, h, units, &mut |f| {
                let gap = ext_gap(fold(s, f), fold(t, f));
                best = best.max(gap);
            });
        }
        (EvaluationSpec::Input(mode), FunctorElement::InputFn(s), FunctorElement::InputFn(t)) => {
            mode.validate(d.top())?;
            let fold = |s: &[usize], f: &[f64]| -> f64 {
                let vals = s.iter().map(|&i| f[i]);
                match mode {
                    InputMode::Max => vals.fold(0.0, f64::max),
                    InputMode::Sum => vals.sum(),
                    InputMode::Avg => vals.sum::<f64>() / s.len().max(1) as f64,
                }
            };
            lift::for_each_grid_nonexpansive(d, h, units, &mut |f| {
                best = best.max((fold(s, f) - fold(t, f)).abs());
            });
        }
        (EvaluationSpec::Squaring, FunctorElement::SquarePair(a1, a2), FunctorElement::SquarePair(b1, b2)) => {
            return lift::squaring_kantorovich_oracle(d, (*a1, *a2), (*b1, *b2), h);
        }
        (EvaluationSpec::Product(eval), FunctorElement::Pair(x1, x2), FunctorElement::Pair(y1, y2)) => {
            eval.validate(d.top())?;
            let dd2 = d2.unwrap_or(d);
            // Only the test functions' values at the four touched points
            // matter, and any pairwise-consistent grid tuple extends to a
            // grid nonexpansive function on the whole carrier.
            for (u1, v1) in grid_value_pairs(d.get(*x1, *y1), d.top(), h, units) {
                for (u2, v2) in grid_value_pairs(dd2.get(*x2, *y2), dd2.top(), h, units) {
                    let va = lift::product_eval(*eval, ExtReal::raw(u1), ExtReal::raw(u2));
                    let vb = lift::product_eval(*eval, ExtReal::raw(v1), ExtReal::raw(v2));
                    best = best.max(ext_gap(va.value(), vb.value()));
                }
            }
        }
        (EvaluationSpec::Coproduct, FunctorElement::CoproductElem(sa, va), FunctorElement::CoproductElem(sb, vb)) => {
            let dd2 = d2.unwrap_or(d);
            if sa == sb {
                let dist =
                    if *sa == Side::Left { d.get(*va, *vb) } else { dd2.get(*va, *vb) };
                for (u, v) in grid_value_pairs(dist, d.top(), h, units) {
                    best = best.max((u - v).abs());
                }
            } else {
                // Independent test functions on the two sides spread the
                // values across the whole range.
                best = d.top().value();
            }
        }
        (EvaluationSpec::Machine(eval, od), FunctorElement::Machine(m1), FunctorElement::Machine(m2)) => {
            eval.validate(d.top())?;
            // Test functions on outputs only matter at the two observed
            // outputs; enumerate their grid values under the output
            // distance constraint.
            let db = od.dist(m1.output, m2.output, d.top());
            let top_units = if d.top().is_finite() { (d.top().value() / h).round() as i64 } else { units };
            for u1 in 0..=top_units {
                for u2 in 0..=top_units {
                    let (fo1, fo2) = (u1 as f64 * h, u2 as f64 * h);
                    if !ExtReal::raw((fo1 - fo2).abs()).approx_le(db) {
                        continue;
                    }
                    lift::for_each_grid_nonexpansive(d, h, units, &mut |f| {
                        let va = lift::machine_eval(
                            *eval,
                            ExtReal::raw(fo1),
                            m1.next.iter().map(|&i| ExtReal::raw(f[i])),
                        );
                        let vb = lift::machine_eval(
                            *eval,
                            ExtReal::raw(fo2),
                            m2.next.iter().map(|&i| ExtReal::raw(f[i])),
                        );
                        best = best.max(ext_gap(va.value(), vb.value()));
                    });
                }
            }
        }
        _ => {
            return Err(Error::InvalidValue(
                "element shapes do not match the evaluation spec".into(),
            ))
        }
    }
    Ok(ExtReal::raw(best))
}

/// All grid value pairs `(u, v)` with `|u - v| <= dist`, the exact
/// projection of grid nonexpansive functions onto two points.
fn grid_value_pairs(dist: ExtReal, top: Top, h: f64, units: i64) -> Vec<(f64, f64)> {
    let max_units = if top.is_finite() { (top.value() / h).round() as i64 } else { units };
    let mut out = Vec::new();
    for a in 0..=max_units {
        for b in 0..=max_units {
            let (u, v) = (a as f64 * h, b as f64 * h);
            if ExtReal::raw((u - v).abs()).approx_le(dist) {
                out.push((u, v));
            }
        }
    }
    out
}

fn grid_units(d: &PseudometricMatrix, h: f64) -> Result<i64> {
    if h <= 0.0 {
        return Err(Error::Parameter("grid step must be positive".into()));
    }
    if d.top().is_finite() {
        return Ok((d.top().value() / h).round() as i64);
    }
    // Infinite top: only function differences matter for the oracles used
    // here, and nonexpansive functions starting at zero stay below the
    // diameter.
    let mut diam = 0.0f64;
    for i in 0..d.len() {
        for j in 0..d.len() {
            let v = d.get(i, j);
            if v.is_infinite() {
                return Err(Error::TooLarge(
                    "grid enumeration needs a finite-diameter metric".into(),
                ));
            }
            diam = diam.max(v.value());
        }
    }
    Ok((diam / h).ceil() as i64)
}

fn ext_gap(a: f64, b: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => (a - b).abs(),
        (false, false) => 0.0,
        _ => f64::INFINITY,
    }
}

// ---------------------------------------------------------------------------
// Well-behavedness
// ---------------------------------------------------------------------------

/// Abstract structure over index points; values are supplied separately so
/// the same structure can be evaluated under several assignments.
#[derive(Debug, Clone)]
enum Shape {
    Dist(Vec<f64>),
    Set(BTreeSet<usize>),
    Input(Vec<usize>),
    Pair(usize, usize),
    Copr(Side, usize),
    Square(usize, usize),
    Machine(usize, Vec<usize>),
}

impl Shape {
    /// Indices of the first argument referenced with positive weight.
    fn touched_primary(&self) -> Vec<usize> {
        match self {
            Shape::Dist(w) => (0..w.len()).filter(|&i| w[i] > 0.0).collect(),
            Shape::Set(s) => s.iter().cloned().collect(),
            Shape::Input(s) => s.clone(),
            Shape::Pair(x, _) => vec![*x],
            Shape::Copr(Side::Left, v) => vec![*v],
            Shape::Copr(Side::Right, _) => vec![],
            Shape::Square(a, b) => vec![*a, *b],
            Shape::Machine(_, s) => s.clone(),
        }
    }

    fn touched_secondary(&self) -> Vec<usize> {
        match self {
            Shape::Pair(_, y) => vec![*y],
            Shape::Copr(Side::Right, v) => vec![*v],
            Shape::Machine(o, _) => vec![*o],
            _ => vec![],
        }
    }
}

/// Evaluates `ev_F(F(f1, f2)(shape))` where the assignments give the real
/// value at each index of the two argument spaces.
fn eval_shape(spec: &EvaluationSpec, shape: &Shape, v1: &[f64], v2: &[f64], top: Top) -> f64 {
    match (spec, shape) {
        (EvaluationSpec::Distribution, Shape::Dist(w)) => {
            w.iter().zip(v1).map(|(w, x)| w * x).sum()
        }
        (EvaluationSpec::Powerset(SetEval::Max), Shape::Set(s)) => {
            s.iter().map(|&i| v1[i]).fold(0.0, f64::max)
        }
        (EvaluationSpec::Powerset(SetEval::Min), Shape::Set(s)) => {
            s.iter().map(|&i| v1[i]).fold(top.value(), f64::min)
        }
        (EvaluationSpec::Input(mode), Shape::Input(s)) => {
            let vals = s.iter().map(|&i| v1[i]);
            match mode {
                InputMode::Max => vals.fold(0.0, f64::max),
                InputMode::Sum => vals.sum(),
                InputMode::Avg => vals.sum::<f64>() / s.len().max(1) as f64,
            }
        }
        (EvaluationSpec::Product(eval), Shape::Pair(x, y)) => {
            lift::product_eval(*eval, ExtReal::raw(v1[*x]), ExtReal::raw(v2[*y])).value()
        }
        (EvaluationSpec::Coproduct, Shape::Copr(side, v)) => match side {
            Side::Left => v1[*v],
            Side::Right => v2[*v],
        },
        (EvaluationSpec::Squaring, Shape::Square(a, b)) => v1[*a] + v1[*b],
        (EvaluationSpec::Machine(eval, _), Shape::Machine(o, s)) => lift::machine_eval(
            *eval,
            ExtReal::raw(v2[*o]),
            s.iter().map(|&i| ExtReal::raw(v1[i])),
        )
        .value(),
        _ => unreachable!("shape mismatch"),
    }
}

fn sample_shape(rng: &mut ChaCha8Rng, spec: &EvaluationSpec, k: usize, letters: usize) -> Shape {
    match spec {
        EvaluationSpec::Distribution => {
            // Proper or subdistribution weights; the conditions cover both.
            let units = rng.gen_range(0..=4);
            let mut w = vec![0.0; k];
            for _ in 0..units {
                w[rng.gen_range(0..k)] += 0.25;
            }
            Shape::Dist(w)
        }
        EvaluationSpec::Powerset(_) => Shape::Set(random_subset(rng, k, 3)),
        EvaluationSpec::Input(_) => {
            Shape::Input((0..letters).map(|_| rng.gen_range(0..k)).collect())
        }
        EvaluationSpec::Product(_) => Shape::Pair(rng.gen_range(0..k), rng.gen_range(0..k)),
        EvaluationSpec::Coproduct => {
            let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
            Shape::Copr(side, rng.gen_range(0..k))
        }
        EvaluationSpec::Squaring => Shape::Square(rng.gen_range(0..k), rng.gen_range(0..k)),
        EvaluationSpec::Machine(_, _) => Shape::Machine(
            rng.gen_range(0..k),
            (0..letters).map(|_| rng.gen_range(0..k)).collect(),
        ),
    }
}

fn grid_value(rng: &mut ChaCha8Rng, top: Top) -> f64 {
    let max = if top.is_finite() { 1.0 } else { 2.0 };
    let units = (max / GRID_STEP).round() as i64;
    rng.gen_range(0..=units) as f64 * GRID_STEP
}

/// Samples instances and tests the three well-behavedness conditions:
/// monotonicity of the evaluation, nonexpansiveness under the Euclidean
/// distance on carried values, and exactness of the zero preimage.
pub fn check_well_behaved(
    spec: &EvaluationSpec,
    budget: usize,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new(format!("well-behaved:{}", spec_slug(spec)));
    let top = default_top(spec);
    let k = 3;
    let letters = 2;

    // Canonical instances first, so the known counterexamples for the min
    // evaluation are always exhibited. Each case is a shape plus the two
    // value assignments per argument space.
    type Case = (Shape, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);
    let mut w2_cases: Vec<Case> = Vec::new();
    if matches!(spec, EvaluationSpec::Powerset(_)) {
        // The set {(0,1),(1,1)} as a pair-valued structure.
        w2_cases.push((
            Shape::Set(BTreeSet::from([0, 1])),
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0; 3],
            vec![0.0; 3],
        ));
    }
    for _ in 0..budget {
        let shape = sample_shape(&mut rng, spec, k, letters);
        let a1: Vec<f64> = (0..k).map(|_| grid_value(&mut rng, top)).collect();
        let b1: Vec<f64> = (0..k).map(|_| grid_value(&mut rng, top)).collect();
        let a2: Vec<f64> = (0..k).map(|_| grid_value(&mut rng, top)).collect();
        let b2: Vec<f64> = (0..k).map(|_| grid_value(&mut rng, top)).collect();
        w2_cases.push((shape, a1, b1, a2, b2));
    }

    for (shape, a1, b1, a2, b2) in &w2_cases {
        report.instances += 1;

        // Monotonicity: raise the assignments pointwise.
        let raise = |v: &[f64]| -> Vec<f64> {
            v.iter().map(|&x| (x + GRID_STEP).min(if top.is_finite() { 1.0 } else { x + GRID_STEP })).collect()
        };
        let lo = eval_shape(spec, shape, a1, a2, top);
        let hi = eval_shape(spec, shape, &raise(a1), &raise(a2), top);
        if lo > hi + EPS_NUM {
            report.violation(
                format!("{shape:?} under {a1:?}/{a2:?}"),
                "evaluation monotone under pointwise increase".into(),
                format!("{lo} > {hi}"),
            );
        }

        // Nonexpansiveness: spread of evaluations bounded by the evaluation
        // of pointwise distances.
        let de1: Vec<f64> = a1.iter().zip(b1).map(|(x, y)| (x - y).abs()).collect();
        let de2: Vec<f64> = a2.iter().zip(b2).map(|(x, y)| (x - y).abs()).collect();
        let va = eval_shape(spec, shape, a1, a2, top);
        let vb = eval_shape(spec, shape, b1, b2, top);
        let bound = eval_shape(spec, shape, &de1, &de2, top);
        if ext_gap(va, vb) > bound + EPS_NUM {
            report.violation(
                format!("{shape:?} with values {a1:?}/{b1:?}"),
                format!("spread <= {bound}"),
                format!("spread = {}", ext_gap(va, vb)),
            );
        }

        // Zero preimage: the evaluation vanishes exactly on structures all
        // of whose carried values are zero.
        let carried_zero = shape
            .touched_primary()
            .iter()
            .all(|&i| a1[i] == 0.0)
            && shape.touched_secondary().iter().all(|&i| a2[i] == 0.0);
        let is_zero = va.abs() <= EPS_NUM;
        if carried_zero != is_zero {
            report.violation(
                format!("{shape:?} under {a1:?}/{a2:?}"),
                "evaluation zero exactly on all-zero structures".into(),
                format!("carried_zero = {carried_zero}, ev = {va}"),
            );
        }
    }
    Ok(report)
}

fn default_top(spec: &EvaluationSpec) -> Top {
    match spec {
        EvaluationSpec::Powerset(_) | EvaluationSpec::Squaring => Top::Inf,
        EvaluationSpec::Input(InputMode::Sum) => Top::Inf,
        EvaluationSpec::Machine(MachineEval::Sum { .. }, _) => Top::Inf,
        EvaluationSpec::Product(ProductEval::PNorm { c1, c2, .. }) if c1 + c2 > 1.0 => Top::Inf,
        _ => Top::One,
    }
}

fn spec_slug(spec: &EvaluationSpec) -> String {
    match spec {
        EvaluationSpec::Distribution => "distribution".into(),
        EvaluationSpec::Powerset(SetEval::Max) => "powerset-max".into(),
        EvaluationSpec::Powerset(SetEval::Min) => "powerset-min".into(),
        EvaluationSpec::Input(InputMode::Max) => "input-max".into(),
        EvaluationSpec::Input(InputMode::Sum) => "input-sum".into(),
        EvaluationSpec::Input(InputMode::Avg) => "input-avg".into(),
        EvaluationSpec::Product(ProductEval::Max { .. }) => "product-max".into(),
        EvaluationSpec::Product(ProductEval::PNorm { .. }) => "product-pnorm".into(),
        EvaluationSpec::Coproduct => "coproduct".into(),
        EvaluationSpec::Squaring => "squaring".into(),
        EvaluationSpec::Machine(MachineEval::DiscountedMax { .. }, _) => "machine-max".into(),
        EvaluationSpec::Machine(MachineEval::AvgSum { .. }, _) => "machine-avg".into(),
        EvaluationSpec::Machine(MachineEval::Sum { .. }, _) => "machine-sum".into(),
    }
}

// ---------------------------------------------------------------------------
// Duality
// ---------------------------------------------------------------------------

/// Compares the price-function oracle against the transport closed form on
/// sampled instances: the oracle must sit within `2h` below the closed
/// form. For the squaring structure the check instead certifies the known
/// gap between the two routes.
///
/// Only the structures for which the two routes provably agree are
/// accepted: distributions, finite sets under max, products and
/// coproducts. Input functions and machines fall to the same swap
/// counterexample as the squaring structure (test functions cannot see
/// which letter leads where), so they are rejected here; the global
/// `K <= W` ordering still covers them.
pub fn check_duality(spec: &EvaluationSpec, budget: usize, seed: u64) -> Result<CheckReport> {
    match spec {
        EvaluationSpec::Distribution
        | EvaluationSpec::Powerset(SetEval::Max)
        | EvaluationSpec::Product(_)
        | EvaluationSpec::Coproduct
        | EvaluationSpec::Squaring => {}
        other => {
            return Err(Error::InvalidValue(format!(
                "duality does not hold for {}; only K <= W is guaranteed",
                spec_slug(other)
            )))
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new(format!("duality:{}", spec_slug(spec)));
    let h = GRID_STEP;

    if matches!(spec, EvaluationSpec::Squaring) {
        // Swapped pairs over a two-point space at distance 1/2: the
        // transport route sees twice the distance, the price-function
        // route sees nothing.
        let mut d = PseudometricMatrix::zero(carrier(2), Top::Inf);
        let delta = 0.5;
        d.set_sym(0, 1, ExtReal::raw(delta));
        let a = FunctorElement::SquarePair(0, 1);
        let b = FunctorElement::SquarePair(1, 0);
        let w = brute_wasserstein(spec, &d, None, &a, &b, h)?;
        let k = brute_kantorovich(spec, &d, None, &a, &b, h)?;
        report.instances = 1;
        if k.value() + 2.0 * h >= w.value() {
            report.violation(
                "swapped pair at distance 0.5".into(),
                "price-function route strictly below transport route".into(),
                format!("kantorovich = {k}, wasserstein = {w}"),
            );
        } else {
            report.notes.push(format!(
                "gap exhibited: kantorovich = {k} vs wasserstein = {w} (2h = {})",
                2.0 * h
            ));
        }
        return Ok(report);
    }

    for _ in 0..budget {
        report.instances += 1;
        let n = rng.gen_range(2..=4);
        // Finite-top grid metrics keep the test-function enumeration exact.
        let d = random_grid_metric(&mut rng, n, Top::One, h, false);
        let d2 = random_grid_metric(&mut rng, n, Top::One, h, false);
        let a = sample_element(&mut rng, spec, n, 2, 0.25);
        let b = sample_element(&mut rng, spec, n, 2, 0.25);
        let closed = closed_form(spec, &d, Some(&d2), &a, &b)?;
        let kant = brute_kantorovich(spec, &d, Some(&d2), &a, &b, h)?;
        if !(kant.approx_le(closed) && closed.value() <= kant.value() + 2.0 * h + EPS_NUM) {
            report.violation(
                format!("{a:?} vs {b:?}"),
                format!("oracle within 2h below {closed}"),
                format!("{kant}"),
            );
        }
        let wass = brute_wasserstein(spec, &d, Some(&d2), &a, &b, 0.25)?;
        if !wass.approx_eq(closed) {
            report.violation(
                format!("{a:?} vs {b:?}"),
                format!("coupling enumeration equals closed form {closed}"),
                format!("{wass}"),
            );
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Compositionality
// ---------------------------------------------------------------------------

/// The three composite structures with dedicated checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositePair {
    /// Sets of sets under max twice.
    PfPf,
    /// Distributions of distributions under expectation twice.
    DfDf,
    /// Sets of machine steps.
    PfM2,
}

/// Tests that lifting twice equals lifting the composite structure once,
/// with the composite side computed by honest coupling enumeration.
pub fn check_compositionality(
    pair: CompositePair,
    budget: usize,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = match pair {
        CompositePair::PfPf => "compositionality:pf-pf",
        CompositePair::DfDf => "compositionality:df-df",
        CompositePair::PfM2 => "compositionality:pf-m2",
    };
    let mut report = CheckReport::new(name);
    for _ in 0..budget {
        report.instances += 1;
        match pair {
            CompositePair::PfPf => check_pfpf_once(&mut rng, &mut report)?,
            CompositePair::DfDf => check_dfdf_once(&mut rng, &mut report)?,
            CompositePair::PfM2 => check_pfm2_once(&mut rng, &mut report)?,
        }
    }
    Ok(report)
}

fn check_pfpf_once(rng: &mut ChaCha8Rng, report: &mut CheckReport) -> Result<()> {
    let n = 3;
    let d = random_grid_metric(rng, n, Top::Inf, GRID_STEP, false);
    let sample_nested = |rng: &mut ChaCha8Rng| -> BTreeSet<BTreeSet<usize>> {
        let outer = rng.gen_range(1..=2);
        (0..outer).map(|_| random_subset(rng, n, 2)).collect()
    };
    let t1 = sample_nested(rng);
    let t2 = sample_nested(rng);

    // Nested route: outer Hausdorff over the inner Hausdorff matrix.
    let inner: Vec<BTreeSet<usize>> = t1.iter().chain(t2.iter()).cloned().collect();
    let inner_metric = PseudometricMatrix::from_fn(
        (0..inner.len()).map(|i| format!("v{i}")).collect(),
        Top::Inf,
        |i, j| lift::hausdorff(&d, &inner[i], &inner[j]).unwrap(),
    );
    let index_of = |s: &BTreeSet<usize>| inner.iter().position(|x| x == s).unwrap();
    let o1: BTreeSet<usize> = t1.iter().map(&index_of).collect();
    let o2: BTreeSet<usize> = t2.iter().map(&index_of).collect();
    let nested = lift::hausdorff(&inner_metric, &o1, &o2)?;

    // Composite route: enumerate couplings of the composite structure.
    let composite = composite_pfpf(&d, &t1, &t2)?;
    if !composite.approx_eq(nested) {
        report.violation(
            format!("{t1:?} vs {t2:?}"),
            format!("composite = nested = {nested}"),
            format!("composite = {composite}"),
        );
    }
    Ok(())
}

/// Exact composite transport distance on sets of sets: minimum over
/// covering families of inner set-couplings. Minimal covers of size at most
/// `|t1| + |t2|` suffice because the evaluation is a maximum.
fn composite_pfpf(
    d: &PseudometricMatrix,
    t1: &BTreeSet<BTreeSet<usize>>,
    t2: &BTreeSet<BTreeSet<usize>>,
) -> Result<ExtReal> {
    if t1.is_empty() && t2.is_empty() {
        return Ok(ZERO);
    }
    if t1.is_empty() != t2.is_empty() {
        return Ok(INF);
    }
    let list1: Vec<&BTreeSet<usize>> = t1.iter().collect();
    let list2: Vec<&BTreeSet<usize>> = t2.iter().collect();
    // Candidate members: couplings of each pair of inner sets, labeled by
    // which pair they project to.
    let mut candidates: Vec<(usize, usize, ExtReal)> = Vec::new();
    for (i, a) in list1.iter().enumerate() {
        for (j, b) in list2.iter().enumerate() {
            for coupling in transport::enumerate_set_couplings(a, b)? {
                let ev = coupling.iter().map(|&(x, y)| d.get(x, y)).fold(ZERO, ExtReal::max);
                candidates.push((i, j, ev));
            }
        }
    }
    let max_size = list1.len() + list2.len();
    let mut best = INF;
    let mut chosen: Vec<usize> = Vec::new();
    fn search(
        candidates: &[(usize, usize, ExtReal)],
        start: usize,
        chosen: &mut Vec<usize>,
        max_size: usize,
        n1: usize,
        n2: usize,
        best: &mut ExtReal,
    ) {
        // Check coverage of the current selection.
        if !chosen.is_empty() {
            let mut c1 = vec![false; n1];
            let mut c2 = vec![false; n2];
            let mut ev = ZERO;
            for &k in chosen.iter() {
                let (i, j, v) = candidates[k];
                c1[i] = true;
                c2[j] = true;
                ev = ev.max(v);
            }
            if c1.iter().all(|&x| x) && c2.iter().all(|&x| x) {
                *best = best.min(ev);
            }
        }
        if chosen.len() == max_size {
            return;
        }
        for k in start..candidates.len() {
            chosen.push(k);
            search(candidates, k + 1, chosen, max_size, n1, n2, best);
            chosen.pop();
        }
    }
    search(&candidates, 0, &mut chosen, max_size, list1.len(), list2.len(), &mut best);
    Ok(best)
}

fn check_dfdf_once(rng: &mut ChaCha8Rng, report: &mut CheckReport) -> Result<()> {
    let n = 3;
    let h = 0.25;
    let d = random_grid_metric(rng, n, Top::One, GRID_STEP, false);
    let sample_outer = |rng: &mut ChaCha8Rng| -> (Vec<FiniteDistribution>, Vec<f64>) {
        let support = rng.gen_range(1..=2);
        let mut inners: Vec<FiniteDistribution> = Vec::new();
        while inners.len() < support {
            let q = random_grid_distribution(rng, n, h);
            if !inners.contains(&q) {
                inners.push(q);
            }
        }
        let mut weights = vec![0.0; inners.len()];
        for _ in 0..(1.0f64 / h).round() as usize {
            weights[rng.gen_range(0..inners.len())] += h;
        }
        (inners, weights)
    };
    let (in1, w1) = sample_outer(rng);
    let (in2, w2) = sample_outer(rng);

    // Nested route: outer transport over the inner transport metric.
    let mut inner_costs = vec![vec![0.0; in2.len()]; in1.len()];
    for (i, q1) in in1.iter().enumerate() {
        for (j, q2) in in2.iter().enumerate() {
            inner_costs[i][j] = transport::solve_transport(&d, q1, q2)?.cost.value();
        }
    }
    let nested = transport::min_cost_raw(&inner_costs, &w1, &w2)?;

    // Composite route: grid enumeration of distributions over inner
    // couplings with the required pushforwards.
    let composite = composite_dfdf(&d, &in1, &w1, &in2, &w2, h)?;
    if (composite - nested).abs() > 2.0 * h + EPS_NUM {
        report.violation(
            format!("outer {w1:?} over {in1:?} vs {w2:?} over {in2:?}"),
            format!("composite within 2h of nested = {nested}"),
            format!("composite = {composite}"),
        );
    }
    Ok(())
}

fn composite_dfdf(
    d: &PseudometricMatrix,
    in1: &[FiniteDistribution],
    w1: &[f64],
    in2: &[FiniteDistribution],
    w2: &[f64],
    h: f64,
) -> Result<f64> {
    // Candidates: grid couplings of each inner pair, with their transport
    // cost under d.
    struct Cand {
        row: usize,
        col: usize,
        cost: f64,
    }
    let mut candidates: Vec<Cand> = Vec::new();
    for (i, q1) in in1.iter().enumerate() {
        for (j, q2) in in2.iter().enumerate() {
            for v in transport::enumerate_grid_couplings(q1.weights(), q2.weights(), h)? {
                let cost: f64 = v
                    .iter()
                    .enumerate()
                    .flat_map(|(x, row)| {
                        row.iter().enumerate().map(move |(y, &w)| (x, y, w))
                    })
                    .map(|(x, y, w)| w * d.get(x, y).value())
                    .sum();
                candidates.push(Cand { row: i, col: j, cost });
            }
        }
    }
    let units = |w: &[f64]| -> Vec<i64> { w.iter().map(|&x| (x / h).round() as i64).collect() };
    let mut row_left = units(w1);
    let mut col_left = units(w2);
    let mut best = f64::INFINITY;
    fn assign(
        candidates: &[Cand],
        k: usize,
        row_left: &mut Vec<i64>,
        col_left: &mut Vec<i64>,
        acc: f64,
        h: f64,
        best: &mut f64,
    ) {
        if acc >= *best {
            return;
        }
        if k == candidates.len() {
            if row_left.iter().all(|&r| r == 0) && col_left.iter().all(|&c| c == 0) {
                *best = acc;
            }
            return;
        }
        let c = &candidates[k];
        let cap = row_left[c.row].min(col_left[c.col]);
        for take in (0..=cap).rev() {
            row_left[c.row] -= take;
            col_left[c.col] -= take;
            assign(
                candidates,
                k + 1,
                row_left,
                col_left,
                acc + take as f64 * h * c.cost,
                h,
                best,
            );
            row_left[c.row] += take;
            col_left[c.col] += take;
        }
    }
    assign(&candidates, 0, &mut row_left, &mut col_left, 0.0, h, &mut best);
    Ok(best)
}

fn check_pfm2_once(rng: &mut ChaCha8Rng, report: &mut CheckReport) -> Result<()> {
    let n = 3;
    let letters = 2;
    let c = 0.8;
    let d = random_grid_metric(rng, n, Top::One, GRID_STEP, false);
    let sample_set = |rng: &mut ChaCha8Rng| -> Vec<MachineElem> {
        let size = rng.gen_range(1..=2);
        let mut out: Vec<MachineElem> = Vec::new();
        while out.len() < size {
            let m = random_machine_elem(rng, n, letters, OutputDist::Discrete);
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    };
    let s1 = sample_set(rng);
    let s2 = sample_set(rng);

    // Machine distance with fixed discrete outputs: top on an output
    // mismatch (no coupling), otherwise the discounted worst successor.
    let machine_dist = |m1: &MachineElem, m2: &MachineElem| -> ExtReal {
        if (m1.output - m2.output).abs() > EPS_NUM {
            ExtReal::raw(1.0)
        } else {
            m1.next
                .iter()
                .zip(&m2.next)
                .map(|(&a, &b)| d.get(a, b))
                .fold(ZERO, ExtReal::max)
                .scale(c)
        }
    };

    // Nested route: Hausdorff over the machine metric.
    let all: Vec<&MachineElem> = s1.iter().chain(s2.iter()).collect();
    let inner_metric = PseudometricMatrix::from_fn(
        (0..all.len()).map(|i| format!("m{i}")).collect(),
        Top::One,
        |i, j| machine_dist(all[i], all[j]),
    );
    let pos = |m: &MachineElem| all.iter().position(|x| *x == m).unwrap();
    let o1: BTreeSet<usize> = s1.iter().map(&pos).collect();
    let o2: BTreeSet<usize> = s2.iter().map(&pos).collect();
    let nested = lift::hausdorff(&inner_metric, &o1, &o2)?;

    // Composite route: covering relations over equal-output pairs, each
    // contributing its unique coupling's discounted successor evaluation.
    let mut candidates: Vec<(usize, usize, ExtReal)> = Vec::new();
    for (i, m1) in s1.iter().enumerate() {
        for (j, m2) in s2.iter().enumerate() {
            if (m1.output - m2.output).abs() <= EPS_NUM {
                let ev = m1
                    .next
                    .iter()
                    .zip(&m2.next)
                    .map(|(&a, &b)| d.get(a, b))
                    .fold(ZERO, ExtReal::max)
                    .scale(c);
                candidates.push((i, j, ev));
            }
        }
    }
    let mut best = ExtReal::raw(1.0);
    let total = candidates.len();
    for mask in 1u32..(1 << total) {
        let mut c1 = vec![false; s1.len()];
        let mut c2 = vec![false; s2.len()];
        let mut ev = ZERO;
        for (k, &(i, j, v)) in candidates.iter().enumerate() {
            if mask >> k & 1 == 1 {
                c1[i] = true;
                c2[j] = true;
                ev = ev.max(v);
            }
        }
        if c1.iter().all(|&x| x) && c2.iter().all(|&x| x) {
            best = best.min(ev);
        }
    }
    if !best.approx_eq(nested) {
        report.violation(
            format!("{s1:?} vs {s2:?}"),
            format!("composite = nested = {nested}"),
            format!("composite = {best}"),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Monad conditions, distributive law, metric preservation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonadKind {
    Powerset,
    Distribution,
}

/// Unit isometry and multiplication nonexpansiveness for the two monads.
pub fn check_monad_conditions(kind: MonadKind, budget: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = match kind {
        MonadKind::Powerset => "monad:powerset",
        MonadKind::Distribution => "monad:distribution",
    };
    let mut report = CheckReport::new(name);
    let n = 3;
    for _ in 0..budget {
        report.instances += 1;
        let d = random_grid_metric(&mut rng, n, Top::One, GRID_STEP, false);
        let x = rng.gen_range(0..n);
        let y = rng.gen_range(0..n);
        match kind {
            MonadKind::Powerset => {
                // Unit: singletons are at exactly the base distance.
                let unit =
                    lift::hausdorff(&d, &BTreeSet::from([x]), &BTreeSet::from([y]))?;
                if !unit.approx_eq(d.get(x, y)) {
                    report.violation(
                        format!("singletons of {x}, {y}"),
                        format!("{}", d.get(x, y)),
                        format!("{unit}"),
                    );
                }
                // Multiplication: union is nonexpansive w.r.t. the nested
                // distance.
                let nested1: Vec<BTreeSet<usize>> =
                    (0..2).map(|_| random_subset(&mut rng, n, 2)).collect();
                let nested2: Vec<BTreeSet<usize>> =
                    (0..2).map(|_| random_subset(&mut rng, n, 2)).collect();
                let flat1: BTreeSet<usize> = nested1.iter().flatten().cloned().collect();
                let flat2: BTreeSet<usize> = nested2.iter().flatten().cloned().collect();
                let lhs = lift::hausdorff(&d, &flat1, &flat2)?;
                let inner: Vec<BTreeSet<usize>> =
                    nested1.iter().chain(nested2.iter()).cloned().collect();
                let im = PseudometricMatrix::from_fn(
                    (0..inner.len()).map(|i| format!("v{i}")).collect(),
                    Top::One,
                    |i, j| lift::hausdorff(&d, &inner[i], &inner[j]).unwrap(),
                );
                let pos = |s: &BTreeSet<usize>| inner.iter().position(|t| t == s).unwrap();
                let rhs = lift::hausdorff(
                    &im,
                    &nested1.iter().map(&pos).collect(),
                    &nested2.iter().map(&pos).collect(),
                )?;
                if !lhs.approx_le(rhs) {
                    report.violation(
                        format!("{nested1:?} vs {nested2:?}"),
                        format!("flattened distance <= nested distance {rhs}"),
                        format!("{lhs}"),
                    );
                }
            }
            MonadKind::Distribution => {
                let unit = transport::solve_transport(
                    &d,
                    &FiniteDistribution::dirac(n, x),
                    &FiniteDistribution::dirac(n, y),
                )?
                .cost;
                if !unit.approx_eq(d.get(x, y)) {
                    report.violation(
                        format!("point masses at {x}, {y}"),
                        format!("{}", d.get(x, y)),
                        format!("{unit}"),
                    );
                }
                // Multiplication: flattening is nonexpansive.
                let h = 0.25;
                let sample = |rng: &mut ChaCha8Rng| {
                    let inners: Vec<FiniteDistribution> =
                        (0..2).map(|_| random_grid_distribution(rng, n, h)).collect();
                    let mut weights = vec![0.0; 2];
                    for _ in 0..(1.0f64 / h).round() as usize {
                        weights[rng.gen_range(0..2)] += h;
                    }
                    (inners, weights)
                };
                let (in1, w1) = sample(&mut rng);
                let (in2, w2) = sample(&mut rng);
                let flatten = |inners: &[FiniteDistribution], ws: &[f64]| {
                    let mut weights = vec![0.0; n];
                    for (q, &w) in inners.iter().zip(ws) {
                        for (i, &qi) in q.weights().iter().enumerate() {
                            weights[i] += w * qi;
                        }
                    }
                    FiniteDistribution::proper(weights).unwrap()
                };
                let lhs =
                    transport::solve_transport(&d, &flatten(&in1, &w1), &flatten(&in2, &w2))?
                        .cost;
                let mut inner_costs = vec![vec![0.0; in2.len()]; in1.len()];
                for (i, q1) in in1.iter().enumerate() {
                    for (j, q2) in in2.iter().enumerate() {
                        inner_costs[i][j] =
                            transport::solve_transport(&d, q1, q2)?.cost.value();
                    }
                }
                let rhs = transport::min_cost_raw(&inner_costs, &w1, &w2)?;
                if lhs.value() > rhs + EPS_NUM {
                    report.violation(
                        format!("outer {w1:?}/{w2:?}"),
                        format!("flattened <= nested {rhs}"),
                        format!("{lhs}"),
                    );
                }
            }
        }
    }
    Ok(report)
}

/// Nonexpansiveness of the determinization law for nondeterministic
/// automata: folding a set of machine steps into one machine step over sets
/// never increases the lifted distance.
pub fn check_distlaw_nfa(budget: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new("distlaw:nfa");
    let n = 3;
    let letters = 2;
    let c = 0.8;
    for _ in 0..budget {
        report.instances += 1;
        let d = random_grid_metric(&mut rng, n, Top::One, GRID_STEP, false);
        let sample_set = |rng: &mut ChaCha8Rng| -> Vec<MachineElem> {
            let size = rng.gen_range(1..=3);
            let mut out = Vec::new();
            for _ in 0..size {
                let m = random_machine_elem(rng, n, letters, OutputDist::Discrete);
                if !out.contains(&m) {
                    out.push(m);
                }
            }
            out
        };
        let s1 = sample_set(&mut rng);
        let s2 = sample_set(&mut rng);

        // Domain distance: Hausdorff over the machine metric.
        let machine_dist = |m1: &MachineElem, m2: &MachineElem| -> ExtReal {
            if (m1.output - m2.output).abs() > EPS_NUM {
                ExtReal::raw(1.0)
            } else {
                m1.next
                    .iter()
                    .zip(&m2.next)
                    .map(|(&a, &b)| d.get(a, b))
                    .fold(ZERO, ExtReal::max)
                    .scale(c)
            }
        };
        let all: Vec<&MachineElem> = s1.iter().chain(s2.iter()).collect();
        let im = PseudometricMatrix::from_fn(
            (0..all.len()).map(|i| format!("m{i}")).collect(),
            Top::One,
            |i, j| machine_dist(all[i], all[j]),
        );
        let pos = |m: &MachineElem| all.iter().position(|x| *x == m).unwrap();
        let domain = lift::hausdorff(
            &im,
            &s1.iter().map(&pos).collect(),
            &s2.iter().map(&pos).collect(),
        )?;

        // Codomain distance after applying the law: one output (any member
        // accepts) and per-letter successor sets.
        let law = |s: &[MachineElem]| -> (bool, Vec<BTreeSet<usize>>) {
            let o = s.iter().any(|m| m.output > 0.5);
            let succ = (0..letters)
                .map(|a| s.iter().map(|m| m.next[a]).collect())
                .collect();
            (o, succ)
        };
        let (o1, succ1) = law(&s1);
        let (o2, succ2) = law(&s2);
        let codomain = if o1 != o2 {
            ExtReal::raw(1.0)
        } else {
            let mut worst = ZERO;
            for a in 0..letters {
                worst = worst.max(lift::hausdorff(&d, &succ1[a], &succ2[a])?);
            }
            worst.scale(c)
        };
        if !codomain.approx_le(domain) {
            report.violation(
                format!("{s1:?} vs {s2:?}"),
                format!("codomain <= domain = {domain}"),
                format!("codomain = {codomain}"),
            );
        }
    }
    Ok(report)
}

/// On sampled metric (not merely pseudometric) base spaces, transport-lifted
/// distances of zero imply equal structured values.
pub fn check_metric_preservation(budget: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new("metric-preservation");
    let n = 3;
    for _ in 0..budget {
        report.instances += 1;
        let d = random_grid_metric(&mut rng, n, Top::One, GRID_STEP, true);
        let s = random_subset(&mut rng, n, 3);
        let t = random_subset(&mut rng, n, 3);
        let hd = lift::hausdorff(&d, &s, &t)?;
        if hd.value() <= EPS_NUM && s != t {
            report.violation(
                format!("{s:?} vs {t:?}"),
                "zero Hausdorff distance only on equal sets".into(),
                format!("{hd}"),
            );
        }
        let p = random_grid_distribution(&mut rng, n, 0.25);
        let q = random_grid_distribution(&mut rng, n, 0.25);
        let w = transport::solve_transport(&d, &p, &q)?.cost;
        let equal = p
            .weights()
            .iter()
            .zip(q.weights())
            .all(|(a, b)| (a - b).abs() <= 1e-7);
        if w.value() <= EPS_NUM && !equal {
            report.violation(
                format!("{:?} vs {:?}", p.weights(), q.weights()),
                "zero transport distance only on equal distributions".into(),
                format!("{w}"),
            );
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Lifted-matrix axioms, monotonicity, order of the routes
// ---------------------------------------------------------------------------

fn all_specs() -> Vec<EvaluationSpec> {
    vec![
        EvaluationSpec::Distribution,
        EvaluationSpec::Powerset(SetEval::Max),
        EvaluationSpec::Input(InputMode::Max),
        EvaluationSpec::Input(InputMode::Avg),
        EvaluationSpec::Product(ProductEval::Max { c1: 1.0, c2: 1.0 }),
        EvaluationSpec::Product(ProductEval::PNorm { c1: 0.5, c2: 0.5, p: 1 }),
        EvaluationSpec::Coproduct,
        EvaluationSpec::Squaring,
        EvaluationSpec::Machine(MachineEval::DiscountedMax { c1: 1.0, c2: 0.8 }, OutputDist::Discrete),
        EvaluationSpec::Machine(MachineEval::AvgSum { c1: 0.4, c2: 0.4 }, OutputDist::Euclid),
    ]
}

fn spec_top(spec: &EvaluationSpec) -> Top {
    match spec {
        EvaluationSpec::Squaring => Top::Inf,
        _ => Top::One,
    }
}

/// Every lifted distance, applied over all pairs of a finite collection of
/// sampled structured values, yields a pseudometric matrix.
pub fn check_lifted_axioms(budget: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new("axioms:lifted");
    let specs = all_specs();
    for _ in 0..budget.div_euclid(specs.len()).max(1) {
        for spec in &specs {
            report.instances += 1;
            let n = 3;
            let top = spec_top(spec);
            let d = random_grid_metric(&mut rng, n, top, GRID_STEP, false);
            let d2 = random_grid_metric(&mut rng, n, top, GRID_STEP, false);
            let elems: Vec<FunctorElement> =
                (0..4).map(|_| sample_element(&mut rng, spec, n, 2, 0.25)).collect();
            let lifted = PseudometricMatrix::from_fn(
                (0..elems.len()).map(|i| format!("e{i}")).collect(),
                top,
                |i, j| closed_form(spec, &d, Some(&d2), &elems[i], &elems[j]).unwrap(),
            );
            let violations = lifted.check_axioms();
            if !violations.is_empty() {
                report.violation(
                    format!("{} over {elems:?}", spec_slug(spec)),
                    "lifted matrix satisfies the pseudometric axioms".into(),
                    format!("{}", violations[0]),
                );
            }
        }
    }
    Ok(report)
}

/// Pointwise larger base metrics give pointwise larger lifted distances.
pub fn check_monotonicity(budget: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new("monotonicity:liftings");
    let specs = all_specs();
    for _ in 0..budget.div_euclid(specs.len()).max(1) {
        for spec in &specs {
            report.instances += 1;
            let n = 3;
            let top = spec_top(spec);
            let d2 = random_grid_metric(&mut rng, n, top, GRID_STEP, false);
            let shrink: f64 = rng.gen_range(0.2..1.0);
            let d1 = d2.scale(shrink);
            let e2 = random_grid_metric(&mut rng, n, top, GRID_STEP, false);
            let e1 = e2.scale(shrink);
            let a = sample_element(&mut rng, spec, n, 2, 0.25);
            let b = sample_element(&mut rng, spec, n, 2, 0.25);
            let lo = closed_form(spec, &d1, Some(&e1), &a, &b)?;
            let hi = closed_form(spec, &d2, Some(&e2), &a, &b)?;
            if !lo.approx_le(hi) {
                report.violation(
                    format!("{} on {a:?} vs {b:?}", spec_slug(spec)),
                    format!("lifted({shrink} * d) <= lifted(d) = {hi}"),
                    format!("{lo}"),
                );
            }
        }
    }
    Ok(report)
}

/// The price-function route never exceeds the transport route
/// (`K <= W`, with the grid slack on the oracle side).
pub fn check_kw_order(budget: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new("kw-order");
    let specs = all_specs();
    let h = GRID_STEP;
    for _ in 0..budget.div_euclid(specs.len()).max(1) {
        for spec in &specs {
            report.instances += 1;
            let n = 3;
            let top = spec_top(spec);
            let d = random_grid_metric(&mut rng, n, top, h, false);
            let d2 = random_grid_metric(&mut rng, n, top, h, false);
            let a = sample_element(&mut rng, spec, n, 2, 0.25);
            let b = sample_element(&mut rng, spec, n, 2, 0.25);
            let w = brute_wasserstein(spec, &d, Some(&d2), &a, &b, 0.25)?;
            let k = brute_kantorovich(spec, &d, Some(&d2), &a, &b, h)?;
            if k.value() > w.value() + 2.0 * h + EPS_NUM {
                report.violation(
                    format!("{} on {a:?} vs {b:?}", spec_slug(spec)),
                    format!("kantorovich <= wasserstein + 2h = {w} + {}", 2.0 * h),
                    format!("{k}"),
                );
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Check registry
// ---------------------------------------------------------------------------

/// All check names accepted by [`run_check`].
pub fn check_names() -> Vec<&'static str> {
    vec![
        "well-behaved:distribution",
        "well-behaved:powerset-max",
        "well-behaved:powerset-min",
        "well-behaved:input-max",
        "well-behaved:input-avg",
        "well-behaved:input-sum",
        "well-behaved:product-max",
        "well-behaved:product-pnorm",
        "well-behaved:coproduct",
        "well-behaved:machine-max",
        "well-behaved:machine-avg",
        "well-behaved:machine-sum",
        "duality:distribution",
        "duality:powerset-max",
        "duality:product-max",
        "duality:product-pnorm",
        "duality:coproduct",
        "duality:squaring",
        "compositionality:pf-pf",
        "compositionality:df-df",
        "compositionality:pf-m2",
        "monad:powerset",
        "monad:distribution",
        "distlaw:nfa",
        "metric-preservation",
        "axioms:lifted",
        "monotonicity:liftings",
        "kw-order",
    ]
}

fn spec_by_slug(slug: &str) -> Result<EvaluationSpec> {
    Ok(match slug {
        "distribution" => EvaluationSpec::Distribution,
        "powerset-max" => EvaluationSpec::Powerset(SetEval::Max),
        "powerset-min" => EvaluationSpec::Powerset(SetEval::Min),
        "input-max" => EvaluationSpec::Input(InputMode::Max),
        "input-avg" => EvaluationSpec::Input(InputMode::Avg),
        "input-sum" => EvaluationSpec::Input(InputMode::Sum),
        "product-max" => EvaluationSpec::Product(ProductEval::Max { c1: 1.0, c2: 1.0 }),
        "product-pnorm" => EvaluationSpec::Product(ProductEval::PNorm { c1: 0.5, c2: 0.5, p: 1 }),
        "coproduct" => EvaluationSpec::Coproduct,
        "squaring" => EvaluationSpec::Squaring,
        "machine-max" => EvaluationSpec::Machine(
            MachineEval::DiscountedMax { c1: 1.0, c2: 0.8 },
            OutputDist::Discrete,
        ),
        "machine-avg" => EvaluationSpec::Machine(
            MachineEval::AvgSum { c1: 0.4, c2: 0.4 },
            OutputDist::Euclid,
        ),
        "machine-sum" => EvaluationSpec::Machine(
            MachineEval::Sum { c1: 0.5, c2: 0.5 },
            OutputDist::Euclid,
        ),
        other => return Err(Error::Unknown(format!("no evaluation named {other:?}"))),
    })
}

/// Runs a named check with the given seed and per-check instance budget.
pub fn run_check(name: &str, seed: u64, budget: usize) -> Result<CheckReport> {
    if let Some(slug) = name.strip_prefix("well-behaved:") {
        return check_well_behaved(&spec_by_slug(slug)?, budget, seed);
    }
    if let Some(slug) = name.strip_prefix("duality:") {
        return check_duality(&spec_by_slug(slug)?, budget, seed);
    }
    match name {
        "compositionality:pf-pf" => check_compositionality(CompositePair::PfPf, budget, seed),
        "compositionality:df-df" => check_compositionality(CompositePair::DfDf, budget, seed),
        "compositionality:pf-m2" => check_compositionality(CompositePair::PfM2, budget, seed),
        "monad:powerset" => check_monad_conditions(MonadKind::Powerset, budget, seed),
        "monad:distribution" => check_monad_conditions(MonadKind::Distribution, budget, seed),
        "distlaw:nfa" => check_distlaw_nfa(budget, seed),
        "metric-preservation" => check_metric_preservation(budget, seed),
        "axioms:lifted" => check_lifted_axioms(budget, seed),
        "monotonicity:liftings" => check_monotonicity(budget, seed),
        "kw-order" => check_kw_order(budget, seed),
        other => Err(Error::Unknown(format!("no check named {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_behaved_positive_cases() {
        for slug in ["distribution", "powerset-max", "input-max", "machine-avg"] {
            let spec = spec_by_slug(slug).unwrap();
            let report = check_well_behaved(&spec, 60, 1).unwrap();
            assert!(report.passed(), "{slug}: {:?}", report.violations.first());
        }
    }

    #[test]
    fn min_evaluation_is_ill_behaved() {
        let spec = EvaluationSpec::Powerset(SetEval::Min);
        let report = check_well_behaved(&spec, 60, 1).unwrap();
        assert!(!report.passed());
        // The canonical witness is reported first: the pair-valued set
        // {(0,1),(1,1)} breaks nonexpansiveness.
        assert!(report
            .violations
            .iter()
            .any(|v| v.expected.contains("spread")));
        // And the zero-preimage condition fails as well.
        assert!(report
            .violations
            .iter()
            .any(|v| v.expected.contains("zero")));
    }

    #[test]
    fn duality_holds_for_closed_forms() {
        for slug in ["distribution", "powerset-max", "product-max", "product-pnorm", "coproduct"] {
            let spec = spec_by_slug(slug).unwrap();
            let report = check_duality(&spec, 25, 2).unwrap();
            assert!(report.passed(), "{slug}: {:?}", report.violations.first());
        }
    }

    #[test]
    fn duality_rejected_where_it_fails() {
        // Swapped successor functions defeat every test function, so the
        // price-function route undershoots the transport route for input
        // functions and machines; the check refuses to claim otherwise.
        assert!(check_duality(&spec_by_slug("input-max").unwrap(), 1, 0).is_err());
        assert!(check_duality(&spec_by_slug("machine-max").unwrap(), 1, 0).is_err());
    }

    #[test]
    fn squaring_duality_gap_found() {
        let report = check_duality(&EvaluationSpec::Squaring, 1, 2).unwrap();
        assert!(report.passed());
        assert!(!report.notes.is_empty());
    }

    #[test]
    fn compositionality_small_budgets() {
        for pair in [CompositePair::PfPf, CompositePair::DfDf, CompositePair::PfM2] {
            let report = check_compositionality(pair, 15, 3).unwrap();
            assert!(report.passed(), "{pair:?}: {:?}", report.violations.first());
        }
    }

    #[test]
    fn monads_and_distributive_law() {
        for kind in [MonadKind::Powerset, MonadKind::Distribution] {
            let report = check_monad_conditions(kind, 40, 4).unwrap();
            assert!(report.passed(), "{kind:?}: {:?}", report.violations.first());
        }
        let report = check_distlaw_nfa(60, 5).unwrap();
        assert!(report.passed(), "{:?}", report.violations.first());
    }

    #[test]
    fn remaining_registry_checks_pass() {
        for name in ["metric-preservation", "axioms:lifted", "monotonicity:liftings", "kw-order"] {
            let report = run_check(name, 6, 40).unwrap();
            assert!(report.passed(), "{name}: {:?}", report.violations.first());
        }
    }

    #[test]
    fn unknown_check_is_an_error() {
        assert!(run_check("no-such-check", 0, 1).is_err());
    }

    #[test]
    fn subdistribution_spread_matches_grid_enumeration() {
        // The directional-transportation reduction behind the
        // subdistribution price-function distance, pinned against direct
        // enumeration of grid test functions over the full range.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = GRID_STEP;
        for _ in 0..40 {
            let n = rng.gen_range(1..=3);
            let d = random_grid_metric(&mut rng, n, Top::One, h, false);
            let sample_sub = |rng: &mut ChaCha8Rng| {
                let units = rng.gen_range(0..=(1.0f64 / 0.25).round() as usize);
                let mut w = vec![0.0; n];
                for _ in 0..units {
                    w[rng.gen_range(0..n)] += 0.25;
                }
                FiniteDistribution::subdistribution(w).unwrap()
            };
            let p = sample_sub(&mut rng);
            let q = sample_sub(&mut rng);
            let closed = lift::kantorovich_distribution(&d, &p, &q).unwrap();
            let mut brute = 0.0f64;
            lift::for_each_grid_nonexpansive(&d, h, (1.0 / h).round() as i64, &mut |f| {
                let spread: f64 = f
                    .iter()
                    .zip(p.weights().iter().zip(q.weights()))
                    .map(|(x, (a, b))| x * (a - b))
                    .sum();
                brute = brute.max(spread.abs());
            });
            // Grid functions undershoot by at most one step of rounding.
            assert!(
                brute <= closed.value() + EPS_NUM && closed.value() <= brute + h + EPS_NUM,
                "closed {closed} vs grid brute {brute} for {:?} / {:?}",
                p.weights(),
                q.weights()
            );
        }
    }
}
