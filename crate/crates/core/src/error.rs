use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors reported by the simulation and analysis layers.
///
/// Variants split into two broad families: invalid inputs (bad geometry,
/// out-of-range parameters, unusable configurations) and numerical-tolerance
/// failures (non-Hermitian or non-positive operators, grids too coarse for
/// the declared quadrature tolerance). The CLI maps the first family to exit
/// code 2 and the second to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice geometry: {0}")]
    InvalidGeometry(String),
    #[error("site index {site} out of range for {sites} sites")]
    InvalidSite { site: usize, sites: usize },
    #[error("filling {filling} exceeds the occupation cap {cap}")]
    FillingExceedsCap { filling: u8, cap: u8 },
    #[error("cannot pair all sites into disjoint (m, m+{offset}) blocks on a ring of {sites}")]
    UnpairableChain { sites: usize, offset: usize },
    #[error("state has no amplitude left (norm is zero)")]
    ZeroState,
    #[error("state mixes total-atom-number sectors and was flagged non-physical")]
    SectorMixing,
    #[error("all weight sits in the vacuum sector; nothing to project onto")]
    VacuumSupportOnly,
    #[error("operator has empty support")]
    EmptySupport,
    #[error("pair offset must be nonzero modulo the ring length")]
    ZeroOffset,
    #[error("momentum grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("matrix is not unitary (defect {0:.3e})")]
    NonUnitary(f64),
    #[error("operator is not Hermitian (defect {0:.3e})")]
    NonHermitian(f64),
    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("cross-sector coherence {0:.3e} exceeds tolerance; input violates the superselection rule")]
    CrossSectorCoherence(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("fidelity {0} outside [0, 1]")]
    InvalidFidelity(f64),
    #[error("nonpositive atom number {0}")]
    NonpositiveAtomNumber(f64),
    #[error("dephasing schedule unusable: {0}")]
    DegenerateSchedule(String),
    #[error("schedule was built for different geometry or offset: {0}")]
    ScheduleMismatch(String),
    #[error("invalid defect budget: {0}")]
    InvalidBudget(String),
    #[error("record is inconsistent: {0}")]
    InvalidRecord(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}
