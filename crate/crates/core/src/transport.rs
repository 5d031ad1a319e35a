//! Exact finite optimal transport.
//!
//! The solver runs the transportation variant of the network simplex on the
//! bipartite supply/demand graph, with Bland's pivot rule (smallest index
//! enters, smallest index leaves among ties) so that degenerate bases cannot
//! cycle. Dual potentials are read off the final spanning-tree basis and
//! turned into a competitive price function.

use std::collections::BTreeSet;

use crate::ext::{ExtReal, INF, ZERO};
use crate::metric::PseudometricMatrix;
use crate::{Error, Result, EPS_NUM};

/// Strictness threshold for simplex pivots. Reduced costs above this
/// (relative to the cost scale) are treated as nonnegative.
const PIVOT_EPS: f64 = 1e-12;

/// A finitely supported weight vector over the carrier of an accompanying
/// pseudometric matrix. Proper distributions sum to one; with the
/// subdistribution flag the sum may be anything up to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    weights: Vec<f64>,
    sub: bool,
}

impl FiniteDistribution {
    /// A proper distribution: nonnegative weights summing to one.
    pub fn proper(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights, false)
    }

    /// A subdistribution: nonnegative weights summing to at most one.
    pub fn subdistribution(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights, true)
    }

    pub fn new(weights: Vec<f64>, sub: bool) -> Result<Self> {
        if weights.iter().any(|&w| w.is_nan() || w < -EPS_NUM) {
            return Err(Error::InvalidValue("negative weight in distribution".into()));
        }
        let total: f64 = weights.iter().sum();
        if sub {
            if total > 1.0 + EPS_NUM {
                return Err(Error::Invariant(format!(
                    "subdistribution mass {total} exceeds 1"
                )));
            }
        } else if (total - 1.0).abs() > EPS_NUM {
            return Err(Error::Invariant(format!(
                "distribution mass {total} is not 1"
            )));
        }
        let weights = weights.into_iter().map(|w| w.max(0.0)).collect();
        Ok(FiniteDistribution { weights, sub })
    }

    /// The point mass at index `i` over a carrier of size `n`.
    pub fn dirac(n: usize, i: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        FiniteDistribution { weights, sub: false }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_sub(&self) -> bool {
        self.sub
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Indices carrying positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&i| self.weights[i] > 0.0)
            .collect()
    }
}

/// A joint weight matrix whose row sums equal the first marginal and whose
/// column sums equal the second.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub entries: Vec<Vec<f64>>,
}

impl TransportPlan {
    /// Largest absolute deviation of the plan's marginals from the given
    /// distributions.
    pub fn marginal_residual(&self, p: &FiniteDistribution, q: &FiniteDistribution) -> f64 {
        let mut res: f64 = 0.0;
        for (i, row) in self.entries.iter().enumerate() {
            res = res.max((row.iter().sum::<f64>() - p.weight(i)).abs());
        }
        for j in 0..self.cols.len() {
            let col: f64 = self.entries.iter().map(|row| row[j]).sum();
            res = res.max((col - q.weight(j)).abs());
        }
        res
    }
}

/// A competitive price function: `|f(x) - f(y)| <= d(x,y)` for all pairs.
#[derive(Debug, Clone)]
pub struct DualPotential {
    pub carrier: Vec<String>,
    pub values: Vec<f64>,
}

impl DualPotential {
    /// Checks competitiveness against the metric that induced it.
    pub fn new(d: &PseudometricMatrix, values: Vec<f64>) -> Result<Self> {
        for i in 0..values.len() {
            for j in 0..values.len() {
                let gap = (values[i] - values[j]).abs();
                if !ExtReal::raw(gap).approx_le(d.get(i, j)) {
                    return Err(Error::Invariant(format!(
                        "price function is not competitive at ({i},{j}): gap {gap} > d = {}",
                        d.get(i, j)
                    )));
                }
            }
        }
        Ok(DualPotential { carrier: d.carrier().to_vec(), values })
    }
}

/// Outcome of the primal solver.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub cost: ExtReal,
    /// `None` exactly when no coupling exists (subdistributions of unequal
    /// mass), in which case `cost` is the configured top.
    pub plan: Option<TransportPlan>,
}

/// Outcome of the dual solver.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub value: ExtReal,
    pub potential: DualPotential,
}

fn check_instance(
    d: &PseudometricMatrix,
    p: &FiniteDistribution,
    q: &FiniteDistribution,
) -> Result<()> {
    if p.len() != d.len() || q.len() != d.len() {
        return Err(Error::CarrierMismatch(format!(
            "distributions over {} and {} states, metric over {}",
            p.len(),
            q.len(),
            d.len()
        )));
    }
    Ok(())
}

/// The support points of both sides grouped into finite-distance
/// components. Infinite entries of a pseudometric are transitive across
/// points (triangle inequality), so the instance splits exactly into
/// independent all-finite subproblems.
struct Decomposition {
    /// Row and column carrier indices per component.
    parts: Vec<(Vec<usize>, Vec<usize>)>,
    /// False when some component's supply and demand masses differ; every
    /// plan must then cross an infinite cell.
    balanced: bool,
}

fn decompose(
    d: &PseudometricMatrix,
    p: &FiniteDistribution,
    q: &FiniteDistribution,
) -> Decomposition {
    let rows = p.support();
    let cols = q.support();
    let mut points: Vec<usize> = rows.iter().chain(cols.iter()).cloned().collect();
    points.sort_unstable();
    points.dedup();

    let mut component = vec![usize::MAX; points.len()];
    let mut count = 0;
    for start in 0..points.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let id = count;
        count += 1;
        let mut stack = vec![start];
        component[start] = id;
        while let Some(k) = stack.pop() {
            for next in 0..points.len() {
                if component[next] == usize::MAX
                    && !d.get(points[k], points[next]).is_infinite()
                {
                    component[next] = id;
                    stack.push(next);
                }
            }
        }
    }

    let mut parts: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new()); count];
    for (k, &pt) in points.iter().enumerate() {
        let id = component[k];
        if p.weight(pt) > 0.0 {
            parts[id].0.push(pt);
        }
        if q.weight(pt) > 0.0 {
            parts[id].1.push(pt);
        }
    }
    let balanced = parts.iter().all(|(r, c)| {
        let supply: f64 = r.iter().map(|&i| p.weight(i)).sum();
        let demand: f64 = c.iter().map(|&j| q.weight(j)).sum();
        (supply - demand).abs() <= EPS_NUM
    });
    Decomposition { parts, balanced }
}

/// Minimal transport cost between `p` and `q` with ground distance `d`,
/// together with an optimal plan.
///
/// For proper distributions a plan always exists and the infimum is
/// attained. For subdistributions of unequal mass there is no coupling: the
/// cost is the configured top and the plan is `None`. If every feasible plan
/// must cross a cell at infinite distance, the cost is infinite and an
/// arbitrary feasible plan is returned.
pub fn solve_transport(
    d: &PseudometricMatrix,
    p: &FiniteDistribution,
    q: &FiniteDistribution,
) -> Result<TransportSolution> {
    check_instance(d, p, q)?;
    let n = d.len();
    let top = d.top();

    if (p.mass() - q.mass()).abs() > EPS_NUM {
        // Only reachable with the subdistribution flag; proper distributions
        // always have equal mass.
        return Ok(TransportSolution { cost: top.max_dist(), plan: None });
    }

    let mut entries = vec![vec![0.0; n]; n];
    let carrier = d.carrier().to_vec();

    // Equal distributions ship everything locally.
    if p.weights() == q.weights() {
        for i in 0..n {
            entries[i][i] = p.weight(i);
        }
        let plan = TransportPlan { rows: carrier.clone(), cols: carrier, entries };
        return Ok(TransportSolution { cost: ZERO, plan: Some(plan) });
    }

    let rows = p.support();
    if rows.is_empty() {
        // Zero mass on both sides: the empty plan is vacuously optimal.
        let plan = TransportPlan { rows: carrier.clone(), cols: carrier, entries };
        return Ok(TransportSolution { cost: ZERO, plan: Some(plan) });
    }

    let deco = decompose(d, p, q);
    let cost = if !deco.balanced {
        // Mass must cross between components at infinite distance; any
        // feasible plan witnesses that.
        let cols = q.support();
        let supply: Vec<f64> = rows.iter().map(|&i| p.weight(i)).collect();
        let demand: Vec<f64> = cols.iter().map(|&j| q.weight(j)).collect();
        let flow = northwest_corner(&supply, &demand).0;
        for (ri, &i) in rows.iter().enumerate() {
            for (cj, &j) in cols.iter().enumerate() {
                entries[i][j] = flow[ri][cj];
            }
        }
        INF
    } else {
        let mut total = ZERO;
        for (part_rows, part_cols) in &deco.parts {
            if part_rows.is_empty() {
                continue;
            }
            let supply: Vec<f64> = part_rows.iter().map(|&i| p.weight(i)).collect();
            let demand: Vec<f64> = part_cols.iter().map(|&j| q.weight(j)).collect();
            let costs: Vec<Vec<f64>> = part_rows
                .iter()
                .map(|&i| part_cols.iter().map(|&j| d.get(i, j).value()).collect())
                .collect();
            let out = simplex(&costs, &supply, &demand)?;
            for (ri, &i) in part_rows.iter().enumerate() {
                for (cj, &j) in part_cols.iter().enumerate() {
                    let f = if out.flow[ri][cj] > EPS_NUM { out.flow[ri][cj] } else { 0.0 };
                    entries[i][j] = f;
                    if f > 0.0 {
                        total = total + d.get(i, j).scale(f);
                    }
                }
            }
        }
        total
    };

    let plan = TransportPlan { rows: carrier.clone(), cols: carrier, entries };
    Ok(TransportSolution { cost, plan: Some(plan) })
}

/// Maximal profit of a competitive price function, with a function attaining
/// it. Requires proper distributions; the value then equals the primal cost
/// (strong duality).
pub fn solve_dual(
    d: &PseudometricMatrix,
    p: &FiniteDistribution,
    q: &FiniteDistribution,
) -> Result<DualSolution> {
    check_instance(d, p, q)?;
    if p.is_sub() || q.is_sub() {
        return Err(Error::InvalidValue(
            "dual potentials are defined for proper distributions".into(),
        ));
    }
    let n = d.len();

    if p.weights() == q.weights() {
        let potential = DualPotential::new(d, vec![0.0; n])?;
        return Ok(DualSolution { value: ZERO, potential });
    }

    let deco = decompose(d, p, q);
    if !deco.balanced {
        return Err(Error::InvalidValue(
            "no finite dual potential: transport cost is infinite".into(),
        ));
    }

    // Per component, tree potentials satisfy u_i + v_j <= d(i,j) with
    // equality on basic cells; the price function f(y) = min_x (d(x,y) - u_x)
    // over that component is competitive (a transform of a dual-feasible
    // vector under a pseudometric cost) and attains the component optimum.
    // Points infinitely far from every support point stay at price zero;
    // infinite separation makes any combination competitive.
    let mut f = vec![0.0; n];
    let mut group = vec![usize::MAX; n];
    for (k, (part_rows, part_cols)) in deco.parts.iter().enumerate() {
        if part_rows.is_empty() {
            continue;
        }
        let supply: Vec<f64> = part_rows.iter().map(|&i| p.weight(i)).collect();
        let demand: Vec<f64> = part_cols.iter().map(|&j| q.weight(j)).collect();
        let costs: Vec<Vec<f64>> = part_rows
            .iter()
            .map(|&i| part_cols.iter().map(|&j| d.get(i, j).value()).collect())
            .collect();
        let out = simplex(&costs, &supply, &demand)?;
        for y in 0..n {
            let mut best = f64::INFINITY;
            for (ri, &x) in part_rows.iter().enumerate() {
                let dxy = d.get(x, y);
                if dxy.is_infinite() {
                    continue;
                }
                best = best.min(dxy.value() - out.u[ri]);
            }
            if best.is_finite() {
                f[y] = best;
                group[y] = k;
            }
        }
    }
    // Normalize each component group so its smallest price is zero; shifts
    // keep competitiveness, and the objective is unchanged because masses
    // balance within every component.
    for k in 0..deco.parts.len() {
        let low = (0..n)
            .filter(|&y| group[y] == k)
            .map(|y| f[y])
            .fold(f64::INFINITY, f64::min);
        if low.is_finite() {
            for y in 0..n {
                if group[y] == k {
                    f[y] -= low;
                }
            }
        }
    }

    let value: f64 = (0..n).map(|x| f[x] * (q.weight(x) - p.weight(x))).sum();
    let potential = DualPotential::new(d, f)?;
    Ok(DualSolution { value: ExtReal::new(value.max(0.0))?, potential })
}

/// Minimum cost of a balanced transportation instance with arbitrary
/// finite nonnegative costs (not necessarily a pseudometric). Zero supplies
/// and demands are dropped before solving.
pub(crate) fn min_cost_raw(costs: &[Vec<f64>], supply: &[f64], demand: &[f64]) -> Result<f64> {
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if (total_s - total_d).abs() > 1e-7 {
        return Err(Error::InvalidValue(format!(
            "unbalanced transportation instance: supply {total_s} vs demand {total_d}"
        )));
    }
    let rows: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > EPS_NUM).collect();
    let cols: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > EPS_NUM).collect();
    if rows.is_empty() || cols.is_empty() {
        return Ok(0.0);
    }
    let s: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let t: Vec<f64> = cols.iter().map(|&j| demand[j]).collect();
    let c: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| costs[i][j]).collect())
        .collect();
    let out = simplex(&c, &s, &t)?;
    Ok(out
        .flow
        .iter()
        .zip(&c)
        .map(|(fr, cr)| fr.iter().zip(cr).map(|(f, c)| f * c).sum::<f64>())
        .sum())
}

struct SimplexOut {
    flow: Vec<Vec<f64>>,
    u: Vec<f64>,
    #[allow(dead_code)]
    v: Vec<f64>,
}

/// Northwest-corner initial basic feasible solution. Returns the flow matrix
/// and the list of basic cells (exactly `m + n - 1` of them, including
/// zero-flow cells on degenerate instances).
fn northwest_corner(supply: &[f64], demand: &[f64]) -> (Vec<Vec<f64>>, Vec<(usize, usize)>) {
    let m = supply.len();
    let n = demand.len();
    let mut a = supply.to_vec();
    let mut b = demand.to_vec();
    let mut flow = vec![vec![0.0; n]; m];
    let mut basis = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let f = a[i].min(b[j]);
        flow[i][j] = f;
        basis.push((i, j));
        a[i] -= f;
        b[j] -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if a[i] <= EPS_NUM && i < m - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    (flow, basis)
}

/// Transportation simplex with Bland's anti-cycling pivot rule.
/// `supply` and `demand` must be positive and balanced; costs finite.
fn simplex(costs: &[Vec<f64>], supply: &[f64], demand: &[f64]) -> Result<SimplexOut> {
    let m = supply.len();
    let n = demand.len();

    let (mut flow, mut basis) = northwest_corner(supply, demand);
    let mut in_basis = vec![vec![false; n]; m];
    for &(i, j) in &basis {
        in_basis[i][j] = true;
    }

    let scale = costs.iter().flatten().fold(1.0f64, |a, &b| a.max(b.abs()));
    let limit = 10_000 * (m + n + 1);
    for _ in 0..limit {
        let (u, v) = tree_potentials(costs, &basis, m, n);

        // Bland: first cell in row-major order with negative reduced cost.
        let mut entering = None;
        'scan: for i in 0..m {
            for j in 0..n {
                if !in_basis[i][j] && costs[i][j] - u[i] - v[j] < -PIVOT_EPS * scale {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(SimplexOut { flow, u, v });
        };

        // The unique cycle: the entering arc plus the tree path from its
        // column node back to its row node. Because the graph is bipartite,
        // arcs along the cycle alternate +,-,+,... starting at the entering
        // arc.
        let mut cycle = vec![(ei, ej)];
        cycle.extend(tree_path(&basis, m, ei, ej));

        let mut theta = f64::INFINITY;
        for (k, &(i, j)) in cycle.iter().enumerate() {
            if k % 2 == 1 {
                theta = theta.min(flow[i][j]);
            }
        }
        // Leaving arc: smallest index among the minimizers (Bland).
        let mut leaving: Option<(usize, usize)> = None;
        for (k, &(i, j)) in cycle.iter().enumerate() {
            let minimal = k % 2 == 1 && flow[i][j] <= theta + PIVOT_EPS;
            if minimal && leaving.is_none_or(|(li, lj)| i * n + j < li * n + lj) {
                leaving = Some((i, j));
            }
        }
        let leaving = leaving.ok_or_else(|| {
            Error::InvalidValue("transport cycle without leaving arc".into())
        })?;

        for (k, &(i, j)) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                flow[i][j] += theta;
            } else {
                flow[i][j] = (flow[i][j] - theta).max(0.0);
            }
        }
        in_basis[leaving.0][leaving.1] = false;
        in_basis[ei][ej] = true;
        let pos = basis.iter().position(|&a| a == leaving).unwrap();
        basis[pos] = (ei, ej);
    }
    Err(Error::InvalidValue("transport simplex failed to terminate".into()))
}

/// Node potentials from the spanning-tree basis: `u[0] = 0` and
/// `u_i + v_j = c_ij` on basic cells.
fn tree_potentials(
    costs: &[Vec<f64>],
    basis: &[(usize, usize)],
    m: usize,
    n: usize,
) -> (Vec<f64>, Vec<f64>) {
    // Nodes 0..m are rows, m..m+n are columns.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m + n];
    for &(i, j) in basis {
        adj[i].push(m + j);
        adj[m + j].push(i);
    }
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut seen = vec![false; m + n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(node) = stack.pop() {
        for &next in &adj[node] {
            if seen[next] {
                continue;
            }
            seen[next] = true;
            if next >= m {
                let (i, j) = (node, next - m);
                v[j] = costs[i][j] - u[i];
            } else {
                let (i, j) = (next, node - m);
                u[i] = costs[i][j] - v[j];
            }
            stack.push(next);
        }
    }
    (u, v)
}

/// Arc sequence of the tree path from the column node of `(row, col)` back
/// to its row node. Together with the entering arc this closes the pivot
/// cycle.
fn tree_path(
    basis: &[(usize, usize)],
    m: usize,
    row: usize,
    col: usize,
) -> Vec<(usize, usize)> {
    let max_col = basis.iter().map(|&(_, j)| j).max().unwrap_or(0).max(col);
    let total = m + max_col + 1;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); total];
    for &(i, j) in basis {
        adj[i].push(m + j);
        adj[m + j].push(i);
    }
    let start = m + col;
    let target = row;
    let mut parent = vec![usize::MAX; total];
    let mut seen = vec![false; total];
    seen[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == target {
            break;
        }
        for &next in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = node;
                queue.push_back(next);
            }
        }
    }
    // Walk back from the row node to the column node, then reverse so arcs
    // run from the entering column onwards around the cycle.
    let mut arcs = Vec::new();
    let mut node = target;
    while node != start {
        let p = parent[node];
        debug_assert!(p != usize::MAX, "basis tree is disconnected");
        let arc = if node >= m { (p, node - m) } else { (node, p - m) };
        arcs.push(arc);
        node = p;
    }
    arcs.reverse();
    arcs
}

/// All set couplings of two finite sets: subsets `T` of the product whose
/// projections are exactly the two sets. Brute-force scale only.
pub fn enumerate_set_couplings(
    s1: &BTreeSet<usize>,
    s2: &BTreeSet<usize>,
) -> Result<Vec<BTreeSet<(usize, usize)>>> {
    if s1.is_empty() && s2.is_empty() {
        return Ok(vec![BTreeSet::new()]);
    }
    if s1.is_empty() != s2.is_empty() {
        return Ok(Vec::new());
    }
    let pairs: Vec<(usize, usize)> = s1
        .iter()
        .flat_map(|&a| s2.iter().map(move |&b| (a, b)))
        .collect();
    if pairs.len() > 12 {
        return Err(Error::TooLarge(format!(
            "{} candidate pairs for set-coupling enumeration (max 12)",
            pairs.len()
        )));
    }
    let mut out = Vec::new();
    for mask in 1u32..(1 << pairs.len()) {
        let t: BTreeSet<(usize, usize)> = pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &p)| p)
            .collect();
        let p1: BTreeSet<usize> = t.iter().map(|&(a, _)| a).collect();
        let p2: BTreeSet<usize> = t.iter().map(|&(_, b)| b).collect();
        if &p1 == s1 && &p2 == s2 {
            out.push(t);
        }
    }
    Ok(out)
}

/// All grid couplings of two grid-valued weight vectors: joint matrices with
/// the given marginals whose entries are multiples of `h`. Both marginals
/// must already lie on the grid.
pub fn enumerate_grid_couplings(p: &[f64], q: &[f64], h: f64) -> Result<Vec<Vec<Vec<f64>>>> {
    let to_units = |w: &[f64]| -> Result<Vec<i64>> {
        w.iter()
            .map(|&x| {
                let k = (x / h).round();
                if (k * h - x).abs() > 1e-7 {
                    Err(Error::InvalidValue(format!(
                        "weight {x} is not a multiple of grid step {h}"
                    )))
                } else {
                    Ok(k as i64)
                }
            })
            .collect()
    };
    let rows = to_units(p)?;
    let cols = to_units(q)?;
    if rows.iter().sum::<i64>() != cols.iter().sum::<i64>() {
        return Ok(Vec::new());
    }
    let support = p.iter().filter(|&&w| w > 0.0).count()
        + q.iter().filter(|&&w| w > 0.0).count();
    if support > 8 {
        return Err(Error::TooLarge(format!(
            "total support {support} for grid-coupling enumeration (max 8)"
        )));
    }
    let m = rows.len();
    let n = cols.len();
    let mut out = Vec::new();
    let mut matrix = vec![vec![0i64; n]; m];
    let mut cols_left = cols.clone();
    fill_grid(&mut matrix, &rows, &mut cols_left, 0, 0, &mut out);
    Ok(out
        .into_iter()
        .map(|mat| {
            mat.into_iter()
                .map(|row| row.into_iter().map(|k| k as f64 * h).collect())
                .collect()
        })
        .collect())
}

fn fill_grid(
    matrix: &mut Vec<Vec<i64>>,
    rows: &[i64],
    cols_left: &mut Vec<i64>,
    i: usize,
    j: usize,
    out: &mut Vec<Vec<Vec<i64>>>,
) {
    let m = rows.len();
    let n = cols_left.len();
    if i == m {
        if cols_left.iter().all(|&c| c == 0) {
            out.push(matrix.clone());
        }
        return;
    }
    let row_used: i64 = matrix[i][..j].iter().sum();
    let row_left = rows[i] - row_used;
    if j + 1 == n {
        // Last cell of the row is forced.
        if row_left <= cols_left[j] {
            matrix[i][j] = row_left;
            cols_left[j] -= row_left;
            fill_grid(matrix, rows, cols_left, i + 1, 0, out);
            cols_left[j] += row_left;
            matrix[i][j] = 0;
        }
        return;
    }
    for k in 0..=row_left.min(cols_left[j]) {
        matrix[i][j] = k;
        cols_left[j] -= k;
        fill_grid(matrix, rows, cols_left, i, j + 1, out);
        cols_left[j] += k;
        matrix[i][j] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::Top;
    use rand::{Rng, SeedableRng};

    fn three_cities() -> PseudometricMatrix {
        PseudometricMatrix::new(
            vec!["A".into(), "B".into(), "C".into()],
            Top::Inf,
            &[
                vec![0.0, 3.0, 5.0],
                vec![3.0, 0.0, 4.0],
                vec![5.0, 4.0, 0.0],
            ],
        )
        .unwrap()
    }

    #[test]
    fn worked_three_city_instance() {
        let d = three_cities();
        let p = FiniteDistribution::proper(vec![0.7, 0.1, 0.2]).unwrap();
        let q = FiniteDistribution::proper(vec![0.2, 0.3, 0.5]).unwrap();
        let sol = solve_transport(&d, &p, &q).unwrap();
        assert!((sol.cost.value() - 2.1).abs() < 1e-9, "cost = {}", sol.cost);
        let plan = sol.plan.unwrap();
        assert!(plan.marginal_residual(&p, &q) < 1e-9);

        let dual = solve_dual(&d, &p, &q).unwrap();
        assert!((dual.value.value() - 2.1).abs() < 1e-9);
        let f = &dual.potential.values;
        assert!((f[0] - 0.0).abs() < 1e-9, "f(A) = {}", f[0]);
        assert!((f[1] - 3.0).abs() < 1e-9, "f(B) = {}", f[1]);
        assert!((f[2] - 5.0).abs() < 1e-9, "f(C) = {}", f[2]);
    }

    #[test]
    fn identical_distributions_ship_locally() {
        let d = three_cities();
        let p = FiniteDistribution::proper(vec![0.5, 0.25, 0.25]).unwrap();
        let sol = solve_transport(&d, &p, &p).unwrap();
        assert_eq!(sol.cost.value(), 0.0);
        let plan = sol.plan.unwrap();
        for i in 0..3 {
            assert!((plan.entries[i][i] - p.weight(i)).abs() < 1e-12);
        }
        let dual = solve_dual(&d, &p, &p).unwrap();
        assert_eq!(dual.value.value(), 0.0);
    }

    #[test]
    fn unequal_mass_subdistributions_have_no_plan() {
        let d = PseudometricMatrix::discrete(vec!["s".into()], Top::One);
        let p = FiniteDistribution::subdistribution(vec![0.3]).unwrap();
        let q = FiniteDistribution::subdistribution(vec![0.7]).unwrap();
        let sol = solve_transport(&d, &p, &q).unwrap();
        assert!(sol.plan.is_none());
        assert_eq!(sol.cost.value(), 1.0);
    }

    #[test]
    fn rejects_negative_weights_and_carrier_mismatch() {
        assert!(FiniteDistribution::proper(vec![1.5, -0.5]).is_err());
        let d = PseudometricMatrix::discrete(vec!["a".into()], Top::One);
        let p = FiniteDistribution::proper(vec![0.5, 0.5]).unwrap();
        assert!(solve_transport(&d, &p, &p).is_err());
    }

    #[test]
    fn forced_infinite_cell_gives_infinite_cost() {
        // Two islands at infinite distance; mass must cross.
        let mut d = PseudometricMatrix::zero(vec!["a".into(), "b".into()], Top::Inf);
        d.set_sym(0, 1, INF);
        let p = FiniteDistribution::proper(vec![1.0, 0.0]).unwrap();
        let q = FiniteDistribution::proper(vec![0.0, 1.0]).unwrap();
        let sol = solve_transport(&d, &p, &q).unwrap();
        assert!(sol.cost.is_infinite());
        assert!(sol.plan.is_some());
    }

    #[test]
    fn avoidable_infinite_cell_is_avoided() {
        let mut d =
            PseudometricMatrix::zero(vec!["a".into(), "b".into(), "c".into()], Top::Inf);
        d.set_sym(0, 1, ExtReal::raw(2.0));
        d.set_sym(0, 2, INF);
        d.set_sym(1, 2, INF);
        let p = FiniteDistribution::proper(vec![0.6, 0.2, 0.2]).unwrap();
        let q = FiniteDistribution::proper(vec![0.2, 0.6, 0.2]).unwrap();
        let sol = solve_transport(&d, &p, &q).unwrap();
        assert!((sol.cost.value() - 0.8).abs() < 1e-9, "cost = {}", sol.cost);
    }

    #[test]
    fn islands_solve_independently_with_exact_duals() {
        // Two finite-distance islands: {a, b} and {c, d}, infinitely far
        // apart. Balanced mass per island means the instance decomposes;
        // costs and the dual value are the sums of the island optima.
        let mut d = PseudometricMatrix::zero(
            vec!["a".into(), "b".into(), "c".into(), "e".into()],
            Top::Inf,
        );
        d.set_sym(0, 1, ExtReal::raw(2.0));
        d.set_sym(2, 3, ExtReal::raw(5.0));
        for i in 0..2 {
            for j in 2..4 {
                d.set_sym(i, j, INF);
            }
        }
        let p = FiniteDistribution::proper(vec![0.5, 0.0, 0.3, 0.2]).unwrap();
        let q = FiniteDistribution::proper(vec![0.1, 0.4, 0.0, 0.5]).unwrap();
        // Island one moves 0.4 across distance 2; island two moves 0.3
        // across distance 5.
        let want = 0.4 * 2.0 + 0.3 * 5.0;
        let sol = solve_transport(&d, &p, &q).unwrap();
        assert!((sol.cost.value() - want).abs() < 1e-9, "cost = {}", sol.cost);
        assert!(sol.plan.unwrap().marginal_residual(&p, &q) < 1e-9);
        let dual = solve_dual(&d, &p, &q).unwrap();
        assert!((dual.value.value() - want).abs() < 1e-9, "dual = {}", dual.value);
    }

    /// Exhaustive oracle: minimum cost over all basic feasible solutions
    /// (vertex enumeration of the transport polytope by spanning trees).
    fn vertex_oracle(costs: &[Vec<f64>], supply: &[f64], demand: &[f64]) -> f64 {
        let m = supply.len();
        let n = demand.len();
        let cells: Vec<(usize, usize)> =
            (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let want = m + n - 1;
        let mut best = f64::INFINITY;
        let mut chosen = Vec::with_capacity(want);
        subsets(&cells, want, 0, &mut chosen, &mut |arcs| {
            if let Some(cost) = basis_cost(arcs, m, supply, demand, costs) {
                if cost < best {
                    best = cost;
                }
            }
        });
        best
    }

    fn subsets(
        cells: &[(usize, usize)],
        want: usize,
        start: usize,
        chosen: &mut Vec<(usize, usize)>,
        visit: &mut impl FnMut(&[(usize, usize)]),
    ) {
        if chosen.len() == want {
            visit(chosen);
            return;
        }
        for k in start..cells.len() {
            chosen.push(cells[k]);
            subsets(cells, want, k + 1, chosen, visit);
            chosen.pop();
        }
    }

    /// Solves for the flows of a candidate basis by peeling leaves; `None`
    /// when the basis is not a feasible spanning tree.
    fn basis_cost(
        arcs: &[(usize, usize)],
        m: usize,
        supply: &[f64],
        demand: &[f64],
        costs: &[Vec<f64>],
    ) -> Option<f64> {
        let mut balance: Vec<f64> = supply
            .iter()
            .cloned()
            .chain(demand.iter().map(|&d| -d))
            .collect();
        let mut flows = vec![0.0; arcs.len()];
        let mut active = vec![true; arcs.len()];
        let node = |arc: (usize, usize), end: usize| if end == 0 { arc.0 } else { m + arc.1 };
        loop {
            let mut progressed = false;
            for k in 0..arcs.len() {
                if !active[k] {
                    continue;
                }
                for end in 0..2 {
                    let v = node(arcs[k], end);
                    let degree = (0..arcs.len())
                        .filter(|&k2| {
                            active[k2] && (node(arcs[k2], 0) == v || node(arcs[k2], 1) == v)
                        })
                        .count();
                    if degree == 1 {
                        // The arc must carry this node's whole balance,
                        // oriented row -> column.
                        let f = if v < m { balance[v] } else { -balance[v] };
                        flows[k] = f;
                        let (i, j) = arcs[k];
                        balance[i] -= f;
                        balance[m + j] += f;
                        active[k] = false;
                        progressed = true;
                        break;
                    }
                }
            }
            if !progressed {
                break;
            }
        }
        if active.iter().any(|&a| a) {
            return None; // cycle
        }
        if balance.iter().any(|&b| b.abs() > 1e-9) {
            return None; // disconnected
        }
        if flows.iter().any(|&f| f < -1e-9) {
            return None; // infeasible vertex
        }
        Some(
            arcs.iter()
                .zip(&flows)
                .map(|(&(i, j), &f)| costs[i][j] * f.max(0.0))
                .sum(),
        )
    }

    #[test]
    fn random_instances_match_vertex_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            // Random 3-point metric via shortest-path closure.
            let mut table = vec![vec![0.0; 3]; 3];
            for i in 0..3 {
                for j in (i + 1)..3 {
                    let v: f64 = rng.gen_range(0.1..4.0);
                    table[i][j] = v;
                    table[j][i] = v;
                }
            }
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        if table[i][k] + table[k][j] < table[i][j] {
                            table[i][j] = table[i][k] + table[k][j];
                        }
                    }
                }
            }
            let d = PseudometricMatrix::new(
                vec!["a".into(), "b".into(), "c".into()],
                Top::Inf,
                &table,
            )
            .unwrap();
            let rand_dist = |rng: &mut rand_chacha::ChaCha8Rng| {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                FiniteDistribution::proper(raw.into_iter().map(|w| w / total).collect())
                    .unwrap()
            };
            let p = rand_dist(&mut rng);
            let q = rand_dist(&mut rng);
            let sol = solve_transport(&d, &p, &q).unwrap();
            let costs: Vec<Vec<f64>> = (0..3)
                .map(|i| (0..3).map(|j| d.get(i, j).value()).collect())
                .collect();
            let oracle = vertex_oracle(&costs, p.weights(), q.weights());
            assert!(
                (sol.cost.value() - oracle).abs() < 1e-7,
                "simplex {} vs oracle {}",
                sol.cost,
                oracle
            );
            let dual = solve_dual(&d, &p, &q).unwrap();
            assert!(
                (dual.value.value() - sol.cost.value()).abs() < 1e-9,
                "duality gap: {} vs {}",
                dual.value,
                sol.cost
            );
        }
    }

    #[test]
    fn transport_is_symmetric() {
        let d = three_cities();
        let p = FiniteDistribution::proper(vec![0.7, 0.1, 0.2]).unwrap();
        let q = FiniteDistribution::proper(vec![0.2, 0.3, 0.5]).unwrap();
        let a = solve_transport(&d, &p, &q).unwrap().cost;
        let b = solve_transport(&d, &q, &p).unwrap().cost;
        assert!(a.approx_eq(b));
    }

    #[test]
    fn set_coupling_enumeration_edges() {
        let empty = BTreeSet::new();
        let one: BTreeSet<usize> = [1].into();
        let two: BTreeSet<usize> = [2].into();
        assert_eq!(enumerate_set_couplings(&empty, &empty).unwrap().len(), 1);
        assert!(enumerate_set_couplings(&empty, &one).unwrap().is_empty());
        let forced = enumerate_set_couplings(&one, &two).unwrap();
        assert_eq!(forced.len(), 1);
        assert!(forced[0].contains(&(1, 2)));
    }

    #[test]
    fn grid_couplings_have_right_marginals() {
        let p = [0.5, 0.5];
        let q = [0.25, 0.75];
        let all = enumerate_grid_couplings(&p, &q, 0.25).unwrap();
        assert!(!all.is_empty());
        for t in &all {
            for i in 0..2 {
                let row: f64 = t[i].iter().sum();
                assert!((row - p[i]).abs() < 1e-9);
            }
            for j in 0..2 {
                let col: f64 = t.iter().map(|r| r[j]).sum();
                assert!((col - q[j]).abs() < 1e-9);
            }
        }
    }
}
