//! Lifted distances: given a base pseudometric and two structured values
//! over its carrier, compute the distance between the values.
//!
//! Each structure (distribution, finite set, input function, pair, tagged
//! value, machine step) comes with an evaluation function that folds
//! structured real data into one real; the Wasserstein route minimizes the
//! evaluated cost over couplings and admits the closed forms implemented
//! here. Kantorovich values coincide with them wherever duality holds;
//! where it fails (the squaring functor) a grid oracle exhibits the gap.

use std::collections::BTreeSet;

use crate::ext::{ExtReal, Top, INF, ZERO};
use crate::metric::PseudometricMatrix;
use crate::transport::{self, FiniteDistribution};
use crate::{Error, Result, EPS_NUM};

/// Which distance the output component of a machine carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputDist {
    /// Zero on equal outputs, top otherwise.
    Discrete,
    /// Absolute difference of real outputs.
    Euclid,
}

impl OutputDist {
    pub fn dist(self, o1: f64, o2: f64, top: Top) -> ExtReal {
        match self {
            OutputDist::Discrete => {
                if (o1 - o2).abs() <= EPS_NUM {
                    ZERO
                } else {
                    top.max_dist()
                }
            }
            OutputDist::Euclid => ExtReal::raw((o1 - o2).abs()),
        }
    }
}

/// Aggregation mode for the input functor `X^A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Max,
    /// Requires an infinite top; sums are unbounded otherwise.
    Sum,
    Avg,
}

impl InputMode {
    pub fn validate(self, top: Top) -> Result<()> {
        if self == InputMode::Sum && top.is_finite() {
            return Err(Error::Parameter(
                "input mode `sum` needs top = inf".into(),
            ));
        }
        Ok(())
    }
}

/// Evaluation parameters for the product of two spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProductEval {
    /// `max{c1 r1, c2 r2}` with `c1, c2` in `]0,1]`.
    Max { c1: f64, c2: f64 },
    /// `(c1 r1^p + c2 r2^p)^(1/p)`. With a finite top this additionally
    /// needs `c1, c2` in `]0,1]` and `c1 + c2 <= 1`.
    PNorm { c1: f64, c2: f64, p: u32 },
}

impl ProductEval {
    pub fn validate(self, top: Top) -> Result<()> {
        match self {
            ProductEval::Max { c1, c2 } => require_unit_interval(&[c1, c2]),
            ProductEval::PNorm { c1, c2, p } => {
                if p == 0 {
                    return Err(Error::Parameter("p-norm exponent must be positive".into()));
                }
                if c1 <= 0.0 || c2 <= 0.0 || !c1.is_finite() || !c2.is_finite() {
                    return Err(Error::Parameter(
                        "p-norm weights must be positive and finite".into(),
                    ));
                }
                if top.is_finite() {
                    require_unit_interval(&[c1, c2])?;
                    if c1 + c2 > 1.0 + EPS_NUM {
                        return Err(Error::Parameter(format!(
                            "p-norm weights must satisfy c1 + c2 <= 1 with finite top, got {}",
                            c1 + c2
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Evaluation parameters for machines `B x X^A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MachineEval {
    /// `max{c1 o, c2 max_a s(a)}` with `c1, c2` in `]0,1]`.
    DiscountedMax { c1: f64, c2: f64 },
    /// `c1 o + c2 |A|^-1 sum_a s(a)` with `c1 + c2 <= 1`.
    AvgSum { c1: f64, c2: f64 },
    /// `c1 o + c2 sum_a s(a)`; requires top = inf.
    Sum { c1: f64, c2: f64 },
}

impl MachineEval {
    pub fn validate(self, top: Top) -> Result<()> {
        match self {
            MachineEval::DiscountedMax { c1, c2 } => require_unit_interval(&[c1, c2]),
            MachineEval::AvgSum { c1, c2 } => {
                require_unit_interval(&[c1, c2])?;
                if c1 + c2 > 1.0 + EPS_NUM {
                    return Err(Error::Parameter(format!(
                        "machine avg-sum weights must satisfy c1 + c2 <= 1, got {}",
                        c1 + c2
                    )));
                }
                Ok(())
            }
            MachineEval::Sum { c1, c2 } => {
                if top.is_finite() {
                    return Err(Error::Parameter(
                        "machine eval `sum` needs top = inf".into(),
                    ));
                }
                if c1 <= 0.0 || c2 <= 0.0 {
                    return Err(Error::Parameter("machine weights must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

fn require_unit_interval(cs: &[f64]) -> Result<()> {
    for &c in cs {
        if !(c > 0.0 && c <= 1.0 + EPS_NUM) {
            return Err(Error::Parameter(format!(
                "weight {c} must lie in the half-open interval ]0, 1]"
            )));
        }
    }
    Ok(())
}

/// Evaluation choice for finite sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetEval {
    /// Maximum with `max {} = 0`; the well-behaved choice.
    Max,
    /// Minimum with `min {} = top`; ill-behaved, kept for the negative
    /// checks.
    Min,
}

/// A structure tag together with its evaluation parameters; drives the
/// brute-force oracles and the command-line `lift` entry point.
#[derive(Debug, Clone, PartialEq)]
pub enum EvaluationSpec {
    /// Expected value of a distribution.
    Distribution,
    Powerset(SetEval),
    Input(InputMode),
    Product(ProductEval),
    Coproduct,
    /// Pairs with sum evaluation; needs an infinite top.
    Squaring,
    Machine(MachineEval, OutputDist),
}

impl EvaluationSpec {
    pub fn validate(&self, top: Top) -> Result<()> {
        match self {
            EvaluationSpec::Distribution | EvaluationSpec::Coproduct => Ok(()),
            EvaluationSpec::Powerset(_) => Ok(()),
            EvaluationSpec::Input(mode) => mode.validate(top),
            EvaluationSpec::Product(eval) => eval.validate(top),
            EvaluationSpec::Squaring => {
                if top.is_finite() {
                    Err(Error::Parameter("squaring evaluation needs top = inf".into()))
                } else {
                    Ok(())
                }
            }
            EvaluationSpec::Machine(eval, _) => eval.validate(top),
        }
    }
}

/// One machine step: an output value and a successor per input letter.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineElem {
    pub output: f64,
    pub next: Vec<usize>,
}

/// Which summand of a coproduct a value lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A structured value over the carrier of an accompanying pseudometric.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctorElement {
    Distribution(FiniteDistribution),
    FiniteSet(BTreeSet<usize>),
    /// Successor per input letter, indexed by alphabet position.
    InputFn(Vec<usize>),
    Pair(usize, usize),
    CoproductElem(Side, usize),
    SquarePair(usize, usize),
    Machine(MachineElem),
}

/// Minimal-transport distance between two distributions over the carrier of
/// `d`. Returns top for subdistributions of unequal mass (no coupling).
pub fn wasserstein_distribution(
    d: &PseudometricMatrix,
    p1: &FiniteDistribution,
    p2: &FiniteDistribution,
) -> Result<ExtReal> {
    Ok(transport::solve_transport(d, p1, p2)?.cost)
}

/// Largest spread of a nonexpansive test function between two
/// distributions. Coincides with [`wasserstein_distribution`] for proper
/// distributions; for subdistributions of unequal mass it stays finite
/// (bounded by top) while the transport route jumps to top.
pub fn kantorovich_distribution(
    d: &PseudometricMatrix,
    p1: &FiniteDistribution,
    p2: &FiniteDistribution,
) -> Result<ExtReal> {
    if !p1.is_sub() && !p2.is_sub() {
        let cost = transport::solve_transport(d, p1, p2)?.cost;
        if cost.is_infinite() {
            // Mass must cross an infinite gap; test functions may then
            // differ unboundedly across it and the spread is infinite too.
            return Ok(INF);
        }
        return Ok(transport::solve_dual(d, p1, p2)?.value);
    }
    if (p1.mass() - p2.mass()).abs() <= EPS_NUM {
        // Equal masses: only differences of the test function matter, so the
        // range cap never binds and duality carries over by scaling.
        return Ok(transport::solve_transport(d, p1, p2)?.cost);
    }
    if !d.top().is_finite() {
        // Unbounded test functions: a large constant already spreads the
        // mass difference arbitrarily far.
        return Ok(INF);
    }
    // Bounded range: the best test function for each direction solves a
    // transportation problem in which demand may also be covered from the
    // range ceiling (cost top) and surplus discarded (cost zero).
    let s1 = directional_spread(d, p1, p2)?;
    let s2 = directional_spread(d, p2, p1)?;
    Ok(s1.max(s2))
}

/// `max { sum f (q - p) | f competitive, 0 <= f <= top }` via its dual
/// transportation problem.
fn directional_spread(
    d: &PseudometricMatrix,
    p: &FiniteDistribution,
    q: &FiniteDistribution,
) -> Result<ExtReal> {
    let n = d.len();
    let top = d.top().value();
    let g: Vec<f64> = (0..n).map(|x| q.weight(x) - p.weight(x)).collect();
    let pos: Vec<usize> = (0..n).filter(|&x| g[x] > EPS_NUM).collect();
    let neg: Vec<usize> = (0..n).filter(|&x| g[x] < -EPS_NUM).collect();
    if pos.is_empty() {
        return Ok(ZERO);
    }
    let pos_mass: f64 = pos.iter().map(|&x| g[x]).sum();
    let neg_mass: f64 = neg.iter().map(|&x| -g[x]).sum();

    // Rows: negative-surplus nodes plus the range ceiling; columns:
    // positive-demand nodes plus a free waste column.
    let m = neg.len() + 1;
    let k = pos.len() + 1;
    let mut costs = vec![vec![0.0; k]; m];
    let mut supply = vec![0.0; m];
    let mut demand = vec![0.0; k];
    for (ri, &x) in neg.iter().enumerate() {
        supply[ri] = -g[x];
        for (cj, &y) in pos.iter().enumerate() {
            let dxy = d.get(x, y);
            costs[ri][cj] = if dxy.is_infinite() { top } else { dxy.value().min(top) };
        }
        costs[ri][k - 1] = 0.0;
    }
    supply[m - 1] = pos_mass;
    for (cj, &y) in pos.iter().enumerate() {
        demand[cj] = g[y];
        costs[m - 1][cj] = top;
    }
    demand[k - 1] = neg_mass;
    costs[m - 1][k - 1] = 0.0;
    let value = transport::min_cost_raw(&costs, &supply, &demand)?;
    ExtReal::new(value.max(0.0))
}

/// Hausdorff distance between two finite sets of carrier points, with the
/// conventions `max {} = 0` and `min {} = top`.
pub fn hausdorff(
    d: &PseudometricMatrix,
    s1: &BTreeSet<usize>,
    s2: &BTreeSet<usize>,
) -> Result<ExtReal> {
    for &x in s1.iter().chain(s2.iter()) {
        if x >= d.len() {
            return Err(Error::Unknown(format!("set element {x} not in carrier")));
        }
    }
    let directed = |from: &BTreeSet<usize>, to: &BTreeSet<usize>| -> ExtReal {
        from.iter()
            .map(|&x| {
                to.iter()
                    .map(|&y| d.get(x, y))
                    .fold(d.top().max_dist(), ExtReal::min)
            })
            .fold(ZERO, ExtReal::max)
    };
    Ok(directed(s1, s2).max(directed(s2, s1)))
}

/// Lifted distance on input functions `A -> X`: pointwise distances folded
/// by the chosen mode.
pub fn lift_input(
    d: &PseudometricMatrix,
    s1: &[usize],
    s2: &[usize],
    mode: InputMode,
) -> Result<ExtReal> {
    if s1.len() != s2.len() {
        return Err(Error::CarrierMismatch(
            "input functions over different alphabets".into(),
        ));
    }
    mode.validate(d.top())?;
    let dists = s1.iter().zip(s2).map(|(&a, &b)| d.get(a, b));
    Ok(match mode {
        InputMode::Max => dists.fold(ZERO, ExtReal::max),
        InputMode::Sum => dists.sum(),
        InputMode::Avg => {
            let total: ExtReal = dists.sum();
            total.scale(1.0 / s1.len() as f64)
        }
    })
}

/// Lifted distance on pairs from two spaces. Duality holds for both
/// evaluation families, so one value serves the transport and the price
/// function view alike.
pub fn lift_product(
    eval: ProductEval,
    d1: &PseudometricMatrix,
    d2: &PseudometricMatrix,
    x: (usize, usize),
    y: (usize, usize),
) -> Result<ExtReal> {
    let top = if d1.top() == Top::Inf || d2.top() == Top::Inf { Top::Inf } else { Top::One };
    eval.validate(top)?;
    let a = d1.get(x.0, y.0);
    let b = d2.get(x.1, y.1);
    Ok(product_eval(eval, a, b))
}

pub(crate) fn product_eval(eval: ProductEval, a: ExtReal, b: ExtReal) -> ExtReal {
    match eval {
        ProductEval::Max { c1, c2 } => a.scale(c1).max(b.scale(c2)),
        ProductEval::PNorm { c1, c2, p } => {
            if a.is_infinite() || b.is_infinite() {
                return INF;
            }
            let p = p as f64;
            ExtReal::raw((c1 * a.value().powf(p) + c2 * b.value().powf(p)).powf(1.0 / p))
        }
    }
}

/// Lifted distance on a coproduct: the component distance on the same side,
/// top across sides (even with an infinite top).
pub fn lift_coproduct(
    d1: &PseudometricMatrix,
    d2: &PseudometricMatrix,
    a: (Side, usize),
    b: (Side, usize),
) -> Result<ExtReal> {
    if d1.top() != d2.top() {
        return Err(Error::CarrierMismatch("coproduct sides disagree on top".into()));
    }
    Ok(match (a.0, b.0) {
        (Side::Left, Side::Left) => d1.get(a.1, b.1),
        (Side::Right, Side::Right) => d2.get(a.1, b.1),
        _ => d1.top().max_dist(),
    })
}

/// Lifted distance on machine steps: the output distance and the successor
/// distances folded by the chosen machine evaluation.
pub fn lift_machine(
    eval: MachineEval,
    output_dist: OutputDist,
    d: &PseudometricMatrix,
    m1: &MachineElem,
    m2: &MachineElem,
) -> Result<ExtReal> {
    if m1.next.len() != m2.next.len() {
        return Err(Error::CarrierMismatch(
            "machine elements over different alphabets".into(),
        ));
    }
    eval.validate(d.top())?;
    let ob = output_dist.dist(m1.output, m2.output, d.top());
    let succ = m1.next.iter().zip(&m2.next).map(|(&a, &b)| d.get(a, b));
    Ok(machine_eval(eval, ob, succ))
}

pub(crate) fn machine_eval(
    eval: MachineEval,
    output_gap: ExtReal,
    succ: impl Iterator<Item = ExtReal>,
) -> ExtReal {
    match eval {
        MachineEval::DiscountedMax { c1, c2 } => {
            let worst = succ.fold(ZERO, ExtReal::max);
            output_gap.scale(c1).max(worst.scale(c2))
        }
        MachineEval::AvgSum { c1, c2 } => {
            let items: Vec<ExtReal> = succ.collect();
            let len = items.len().max(1) as f64;
            let total: ExtReal = items.into_iter().sum();
            output_gap.scale(c1) + total.scale(c2 / len)
        }
        MachineEval::Sum { c1, c2 } => {
            let total: ExtReal = succ.sum();
            output_gap.scale(c1) + total.scale(c2)
        }
    }
}

/// Transport distance on the squaring functor with sum evaluation: the
/// unique coupling pairs components positionally, so the distance is the
/// sum of the component distances.
pub fn squaring_wasserstein(
    d: &PseudometricMatrix,
    t1: (usize, usize),
    t2: (usize, usize),
) -> ExtReal {
    d.get(t1.0, t2.0) + d.get(t1.1, t2.1)
}

/// Grid lower bound for the price-function distance on the squaring
/// functor: maximum over grid-valued nonexpansive `f` of
/// `|f(x1)+f(x2) - f(y1)-f(y2)|`.
///
/// Rounding a nonexpansive function down to the grid can break
/// nonexpansiveness by less than `h`, so the guarantee is
/// `true - 2h <= oracle <= true`. Swapped pairs evaluate equal under every
/// `f`, hence the oracle is exactly zero there.
pub fn squaring_kantorovich_oracle(
    d: &PseudometricMatrix,
    t1: (usize, usize),
    t2: (usize, usize),
    h: f64,
) -> Result<ExtReal> {
    if d.len() > 5 {
        return Err(Error::TooLarge(format!(
            "squaring oracle supports carriers up to 5 states, got {}",
            d.len()
        )));
    }
    if h <= 0.0 {
        return Err(Error::Parameter("grid step must be positive".into()));
    }
    // Only differences of f matter, so normalize f to start at zero; any
    // nonexpansive f then stays below the finite diameter.
    let mut diam = 0.0f64;
    for i in 0..d.len() {
        for j in 0..d.len() {
            let v = d.get(i, j);
            if v.is_infinite() {
                return Err(Error::TooLarge(
                    "squaring oracle needs a finite-diameter base metric".into(),
                ));
            }
            diam = diam.max(v.value());
        }
    }
    let max_units = (diam / h).ceil() as i64;
    let mut best = 0.0f64;
    for_each_grid_nonexpansive(d, h, max_units, &mut |f| {
        let v1 = f[t1.0] + f[t1.1];
        let v2 = f[t2.0] + f[t2.1];
        best = best.max((v1 - v2).abs());
    });
    Ok(ExtReal::raw(best))
}

/// Enumerates every function from the carrier of `d` to the grid
/// `{0, h, ..., max_units * h}` that is nonexpansive with respect to `d`,
/// by backtracking with interval propagation.
pub(crate) fn for_each_grid_nonexpansive(
    d: &PseudometricMatrix,
    h: f64,
    max_units: i64,
    visit: &mut impl FnMut(&[f64]),
) {
    let n = d.len();
    let mut values = vec![0.0f64; n];
    fn recurse(
        d: &PseudometricMatrix,
        h: f64,
        max_units: i64,
        i: usize,
        values: &mut Vec<f64>,
        visit: &mut impl FnMut(&[f64]),
    ) {
        let n = d.len();
        if i == n {
            visit(values);
            return;
        }
        let mut lo = 0i64;
        let mut hi = max_units;
        for j in 0..i {
            let dij = d.get(i, j);
            if dij.is_infinite() {
                continue;
            }
            let bound = dij.value() + 1e-9;
            lo = lo.max(((values[j] - bound) / h).ceil() as i64);
            hi = hi.min(((values[j] + bound) / h).floor() as i64);
        }
        for k in lo..=hi {
            values[i] = k as f64 * h;
            recurse(d, h, max_units, i + 1, values, visit);
        }
    }
    recurse(d, h, max_units, 0, &mut values, visit);
}
