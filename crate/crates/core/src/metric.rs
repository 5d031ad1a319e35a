//! Pseudometric matrices over finite carriers.
//!
//! A pseudometric matrix stores a symmetric distance table with zero
//! diagonal over an ordered list of named states. Distinct states may be at
//! distance zero. All axiom checks use the global tolerance [`EPS_NUM`]
//! except on infinite values, which are compared exactly.

use std::fmt;

use crate::ext::{euclid, ExtReal, Top, ZERO};
use crate::{Error, Result, EPS_NUM};

pub use crate::ext::euclid as euclid_distance;

/// Symmetric square matrix of distances in `[0, top]` with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudometricMatrix {
    carrier: Vec<String>,
    top: Top,
    entries: Vec<ExtReal>,
}

/// One violated pseudometric axiom instance, with the offending values.
#[derive(Debug, Clone, PartialEq)]
pub enum AxiomViolation {
    Reflexivity { state: usize, value: ExtReal },
    Symmetry { i: usize, j: usize, d_ij: ExtReal, d_ji: ExtReal },
    Triangle { i: usize, j: usize, k: usize, slack: f64 },
    Range { i: usize, j: usize, value: ExtReal },
}

impl fmt::Display for AxiomViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxiomViolation::Reflexivity { state, value } => {
                write!(f, "d({state},{state}) = {value}, expected 0")
            }
            AxiomViolation::Symmetry { i, j, d_ij, d_ji } => {
                write!(f, "d({i},{j}) = {d_ij} but d({j},{i}) = {d_ji}")
            }
            AxiomViolation::Triangle { i, j, k, slack } => {
                write!(f, "d({i},{k}) > d({i},{j}) + d({j},{k}) by {slack}")
            }
            AxiomViolation::Range { i, j, value } => {
                write!(f, "d({i},{j}) = {value} exceeds top")
            }
        }
    }
}

impl PseudometricMatrix {
    /// The zero pseudometric (bottom of the lattice).
    pub fn zero(carrier: Vec<String>, top: Top) -> Self {
        let n = carrier.len();
        PseudometricMatrix { carrier, top, entries: vec![ZERO; n * n] }
    }

    /// The discrete metric: top off the diagonal, zero on it.
    pub fn discrete(carrier: Vec<String>, top: Top) -> Self {
        let mut m = Self::zero(carrier, top);
        let n = m.len();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m.entries[i * n + j] = top.max_dist();
                }
            }
        }
        m
    }

    /// Builds from a full table of raw values, validating every axiom.
    pub fn new(carrier: Vec<String>, top: Top, table: &[Vec<f64>]) -> Result<Self> {
        let n = carrier.len();
        if table.len() != n || table.iter().any(|row| row.len() != n) {
            return Err(Error::Invariant(format!(
                "metric table must be {n}x{n} to match the carrier"
            )));
        }
        let mut entries = Vec::with_capacity(n * n);
        for row in table {
            for &v in row {
                entries.push(ExtReal::bounded(v, top)?);
            }
        }
        let m = PseudometricMatrix { carrier, top, entries };
        let violations = m.check_axioms();
        if let Some(v) = violations.first() {
            return Err(Error::Invariant(format!("not a pseudometric: {v}")));
        }
        Ok(m)
    }

    /// Builds by evaluating `f` on all pairs `i < j`; the diagonal is zero
    /// and symmetry holds by construction. The triangle inequality is the
    /// caller's obligation.
    pub fn from_fn(
        carrier: Vec<String>,
        top: Top,
        mut f: impl FnMut(usize, usize) -> ExtReal,
    ) -> Self {
        let n = carrier.len();
        let mut m = Self::zero(carrier, top);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                m.entries[i * n + j] = d;
                m.entries[j * n + i] = d;
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.carrier.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carrier.is_empty()
    }

    pub fn top(&self) -> Top {
        self.top
    }

    pub fn carrier(&self) -> &[String] {
        &self.carrier
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.carrier
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Unknown(format!("state {name:?} not in carrier")))
    }

    pub fn get(&self, i: usize, j: usize) -> ExtReal {
        self.entries[i * self.carrier.len() + j]
    }

    /// Sets `d(i,j)` and `d(j,i)` simultaneously.
    pub fn set_sym(&mut self, i: usize, j: usize, d: ExtReal) {
        let n = self.carrier.len();
        self.entries[i * n + j] = d;
        self.entries[j * n + i] = d;
    }

    /// Pointwise discount by a factor in `]0, 1]`.
    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            *e = e.scale(factor);
        }
        out
    }

    /// Reports every violated axiom instance. Empty iff the matrix is a
    /// pseudometric with values in `[0, top]`.
    pub fn check_axioms(&self) -> Vec<AxiomViolation> {
        let n = self.len();
        let mut out = Vec::new();
        let top = self.top.value();
        for i in 0..n {
            let d_ii = self.get(i, i);
            if !d_ii.is_zero() && d_ii.value() > EPS_NUM {
                out.push(AxiomViolation::Reflexivity { state: i, value: d_ii });
            }
            for j in 0..n {
                let d_ij = self.get(i, j);
                if d_ij.value() > top + EPS_NUM && !(d_ij.is_infinite() && self.top == Top::Inf)
                {
                    out.push(AxiomViolation::Range { i, j, value: d_ij });
                }
                if j > i && !d_ij.approx_eq(self.get(j, i)) {
                    out.push(AxiomViolation::Symmetry { i, j, d_ij, d_ji: self.get(j, i) });
                }
            }
        }
        // Each triple is reported once: symmetry makes (i,j,k) and (k,j,i)
        // the same instance, and degenerate triples hold trivially.
        for i in 0..n {
            for k in (i + 1)..n {
                for j in 0..n {
                    if j == i || j == k {
                        continue;
                    }
                    let lhs = self.get(i, k);
                    let rhs = self.get(i, j) + self.get(j, k);
                    if !lhs.approx_le(rhs) {
                        let slack = if lhs.is_infinite() {
                            f64::INFINITY
                        } else {
                            lhs.value() - rhs.value()
                        };
                        out.push(AxiomViolation::Triangle { i, j, k, slack });
                    }
                }
            }
        }
        out
    }

    pub fn is_pseudometric(&self) -> bool {
        self.check_axioms().is_empty()
    }

    /// True when all entries of `self` are pointwise at most those of
    /// `other` (up to tolerance).
    pub fn le(&self, other: &Self) -> bool {
        self.entries
            .iter()
            .zip(&other.entries)
            .all(|(a, b)| a.approx_le(*b))
    }

    fn require_same_carrier(&self, other: &Self) -> Result<()> {
        if self.carrier != other.carrier {
            return Err(Error::CarrierMismatch(
                "pseudometric matrices have different carriers".into(),
            ));
        }
        if self.top != other.top {
            return Err(Error::CarrierMismatch(
                "pseudometric matrices have different tops".into(),
            ));
        }
        Ok(())
    }
}

/// Pointwise supremum of a nonempty family sharing one carrier. The join of
/// pseudometrics in the lattice of pseudometrics is the pointwise sup, so
/// the result satisfies all axioms whenever the inputs do.
pub fn sup_join(ds: &[PseudometricMatrix]) -> Result<PseudometricMatrix> {
    let first = ds
        .first()
        .ok_or_else(|| Error::InvalidValue("sup_join of an empty family".into()))?;
    let mut out = first.clone();
    for d in &ds[1..] {
        first.require_same_carrier(d)?;
        for (e, v) in out.entries.iter_mut().zip(&d.entries) {
            *e = e.max(*v);
        }
    }
    Ok(out)
}

/// Maximum over all entries of the Euclidean distance between the two
/// matrices. Used as the convergence measure of fixed-point iteration.
pub fn sup_norm_diff(d1: &PseudometricMatrix, d2: &PseudometricMatrix) -> Result<ExtReal> {
    d1.require_same_carrier(d2)?;
    Ok(d1
        .entries
        .iter()
        .zip(&d2.entries)
        .map(|(a, b)| euclid(*a, *b))
        .fold(ZERO, ExtReal::max))
}
