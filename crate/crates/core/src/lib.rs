//! Desk-scale simulator and analysis toolkit for detecting and quantifying
//! delocalized bipartite entanglement of lattice-trapped atoms from
//! momentum-space correlation functions.
//!
//! The crate is organized around the measurement pipeline:
//!
//! * [`fock`] — truncated second-quantized Fock space on a 1D ring with two
//!   internal levels, bosonic or fermionic ladder algebra, expectation values.
//! * [`builders`] — named test states (Mott, delocalized atoms, Bell chains)
//!   and random-defect injection with an explicit (ε, r) budget.
//! * [`tof`] — time-of-flight observables: momentum distributions `n(k)`,
//!   density-density correlations `c_xy(k,k')`, and the Fourier-transform
//!   witnesses `Q_x`, `Q_x^{xy}` computed along two independent paths
//!   (grid quadrature vs direct operator sums).
//! * [`reduced`] — the delocalized two-site reduced state `ρ_AB = Σ_m ρ_(m,m+x)`,
//!   its vacuum / two-atom projections and atom-number sector split.
//! * [`bounds`] — entanglement-of-formation lower bounds, defect error
//!   budgets, and the exact oracles (Wootters EoF, sector-wise EoF) used to
//!   verify them.
//! * [`report`] — witness reports combining everything above.
//! * [`dephasing`] — quadratic-field dephasing schedules that cancel the
//!   site-displaced cross terms of the internal-level witnesses.
//! * [`ring_search`] — randomized maximization of the pair EoF over
//!   unit-filled ring states.

pub mod bounds;
pub mod builders;
pub mod dephasing;
pub mod envelope;
pub mod error;
pub mod fock;
pub mod reduced;
pub mod report;
pub mod ring_search;
pub mod tof;

pub use error::{Error, Result};
pub use fock::{
    DensityOperator, FockState, LadderKind, LatticeGeometry, Level, ManyBodyState, Rho, Statistics,
};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Amplitudes below this threshold are pruned after ladder applications.
pub const AMP_PRUNE: f64 = 1e-14;
