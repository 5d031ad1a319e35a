//! Behavioral pseudometrics on finite-state quantitative transition systems.
//!
//! The library builds distances between states of finite coalgebraic systems
//! (probabilistic transition systems, deterministic and nondeterministic
//! automata, automata with real outputs, metric transition systems) out of a
//! single ingredient: a lifting that turns a pseudometric on a state space
//! into a pseudometric on structured values over that space (distributions,
//! finite sets, successor functions, pairs, tagged values).
//!
//! Two liftings are provided for each structure. The *Wasserstein* lifting
//! minimizes the evaluated cost over couplings (optimal transport view); the
//! *Kantorovich* lifting maximizes the spread of nonexpansive test functions
//! (price function view). Fixed-point iteration of a lifting along a system's
//! transition structure yields the bisimilarity pseudometric; determinization
//! followed by the same iteration yields trace pseudometrics.
//!
//! Modules:
//! - [`ext`]: arithmetic on `[0, top]` with a configurable maximal element.
//! - [`metric`]: pseudometric matrices over finite carriers, lattice joins,
//!   axiom checking.
//! - [`transport`]: exact finite optimal transport (network simplex) with
//!   dual potentials, and brute-force coupling enumeration.
//! - [`lift`]: closed-form lifted distances per structure.
//! - [`systems`]: the system kinds, their file format, and builtin fixtures.
//! - [`fixpoint`]: Kleene iteration computing bisimilarity pseudometrics.
//! - [`trace`]: determinization and trace pseudometrics for NFAs and
//!   probabilistic automata.
//! - [`verify`]: seeded brute-force checks for the side conditions the
//!   closed forms rely on (well-behavedness, duality, compositionality,
//!   monad laws, distributive laws).

pub mod ext;
pub mod fixpoint;
pub mod lift;
pub mod metric;
pub mod systems;
pub mod trace;
pub mod transport;
pub mod verify;

mod error;

pub use error::Error;
pub use ext::{ExtReal, Top};
pub use metric::PseudometricMatrix;
pub use systems::SystemSpec;
pub use transport::FiniteDistribution;

/// Absolute tolerance used whenever an axiom or equality of floating-point
/// values is checked. Exact equality is used only for infinite values.
pub const EPS_NUM: f64 = 1e-9;

/// Result alias for fallible operations in this crate.
pub type Result<T> = std::result::Result<T, Error>;
