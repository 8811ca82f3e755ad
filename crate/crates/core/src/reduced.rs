//! The delocalized bipartite reduced state `ρ_AB = Σ_m ρ_(m,m+x)`, its
//! normalized projections and its atom-number sector decomposition.
//!
//! `ρ_AB` is kept unnormalized so its expectation values stay one-to-one with
//! translationally summed measurement results: with the sum running over all
//! `L` ring sites, `⟨n_A⟩_{ρ_AB} = ⟨N⟩` holds exactly and the trace of the
//! block is `L` for a normalized input state.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{
    reduce_to_sites, DensityOperator, FockState, LatticeGeometry, Rho, Statistics,
};
use crate::C64;

/// Tolerance below which cross-sector coherence is considered numerical noise.
pub const SECTOR_COHERENCE_TOL: f64 = 1e-12;

/// Geometry of the two-site block associated with a pair `(A, B)`.
pub fn pair_geometry(source: &LatticeGeometry) -> LatticeGeometry {
    LatticeGeometry::new(2, source.lattice_const(), source.max_occ())
        .expect("two-site geometry is always valid")
}

/// Pair basis state from per-site, per-level occupations `(n_aA, n_aB, n_bA, n_bB)`.
pub fn pair_state(na_a: u8, na_b: u8, nb_a: u8, nb_b: u8) -> FockState {
    FockState::from_occupations(vec![na_a, na_b, nb_a, nb_b])
}

/// Deterministic enumeration of the full pair basis up to the cap.
pub fn pair_basis(cap: u8) -> Vec<FockState> {
    let mut out = Vec::with_capacity(((cap as usize) + 1).pow(4));
    for na_a in 0..=cap {
        for na_b in 0..=cap {
            for nb_a in 0..=cap {
                for nb_b in 0..=cap {
                    out.push(pair_state(na_a, na_b, nb_a, nb_b));
                }
            }
        }
    }
    out
}

/// The one-atom-per-site internal-qubit basis of the pair, ordered
/// `[aa, ab, ba, bb]` by the levels at `(A, B)`.
pub fn internal_qubit_basis() -> [FockState; 4] {
    [
        pair_state(1, 1, 0, 0),
        pair_state(1, 0, 0, 1),
        pair_state(0, 1, 1, 0),
        pair_state(0, 0, 1, 1),
    ]
}

/// Sparse Bell vectors over the internal-level qubit:
/// `φ± = (|ab⟩ ± |ba⟩)/√2`, `ψ± = (|aa⟩ ± |bb⟩)/√2`.
pub fn bell_vector(label: crate::builders::BellLabel) -> Vec<(FockState, C64)> {
    use crate::builders::BellLabel::*;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (first, second, sign) = match label {
        PhiPlus => (pair_state(1, 0, 0, 1), pair_state(0, 1, 1, 0), 1.0),
        PhiMinus => (pair_state(1, 0, 0, 1), pair_state(0, 1, 1, 0), -1.0),
        PsiPlus => (pair_state(1, 1, 0, 0), pair_state(0, 0, 1, 1), 1.0),
        PsiMinus => (pair_state(1, 1, 0, 0), pair_state(0, 0, 1, 1), -1.0),
    };
    vec![(first, C64::new(s, 0.0)), (second, C64::new(sign * s, 0.0))]
}

/// Restriction of `ρ` to the sites `m` and `m + x` (ring arithmetic); the
/// trace of the result equals the trace of `ρ` (one, after normalization).
pub fn restrict_to_pair(rho: Rho<'_>, m: usize, x: i64) -> Result<DensityOperator> {
    let geom = *rho.geometry();
    geom.check_site(m)?;
    let partner = geom.wrap(m, x);
    if partner == m {
        return Err(Error::ZeroOffset);
    }
    reduce_to_sites(rho, &[m, partner])
}

/// One atom-number sector of a `ρ_AB` block.
#[derive(Debug, Clone)]
pub struct SectorBlock {
    pub atoms: u32,
    pub block: DensityOperator,
    pub trace: f64,
}

/// The delocalized two-site state at offset `x`, unnormalized.
#[derive(Debug, Clone)]
pub struct BipartiteReducedState {
    x: i64,
    statistics: Statistics,
    source_geometry: LatticeGeometry,
    block: DensityOperator,
}

impl BipartiteReducedState {
    pub fn x(&self) -> i64 {
        self.x
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn source_geometry(&self) -> &LatticeGeometry {
        &self.source_geometry
    }

    /// The unnormalized two-site block.
    pub fn block(&self) -> &DensityOperator {
        &self.block
    }

    pub fn trace(&self) -> f64 {
        self.block.trace()
    }

    /// Trace of everything outside the vacuum sector. Bounded by `2⟨N⟩` in
    /// general and equal to `⟨N⟩` for one-atom-per-site inputs.
    pub fn nonvacuum_trace(&self) -> f64 {
        self.block
            .entries()
            .iter()
            .filter(|((i, j), _)| i == j && i.total() > 0)
            .map(|(_, v)| v.re)
            .sum()
    }

    /// The measurement-side bound `2⟨N⟩` on the non-vacuum trace (each site
    /// appears once as `A` and once as `B`). The bounds divide by this
    /// instead of the exact trace, which is not itself a collective
    /// observable; keeping both exposes how conservative that step is.
    pub fn nonvacuum_trace_bound(&self) -> f64 {
        2.0 * self.raw_site_a_number()
    }

    /// Splits the block into atom-number sectors, checking that cross-sector
    /// coherence stays below tolerance (a violation flags a non-physical
    /// input).
    pub fn sector_decompose(&self) -> Result<Vec<SectorBlock>> {
        let scale = self.trace().abs().max(1.0);
        let mut worst = 0.0f64;
        let mut sectors: std::collections::BTreeMap<u32, DensityOperator> =
            std::collections::BTreeMap::new();
        for ((i, j), v) in self.block.entries() {
            if i.total() != j.total() {
                worst = worst.max(v.norm());
                continue;
            }
            sectors
                .entry(i.total())
                .or_insert_with(|| DensityOperator::zero(*self.block.geometry(), self.statistics))
                .insert(i.clone(), j.clone(), *v);
        }
        if worst > SECTOR_COHERENCE_TOL * scale {
            return Err(Error::CrossSectorCoherence(worst));
        }
        Ok(sectors
            .into_iter()
            .map(|(atoms, block)| {
                let trace = block.trace();
                SectorBlock {
                    atoms,
                    block,
                    trace,
                }
            })
            .collect())
    }

    /// `ρ'_AB`: the vacuum sector projected out, renormalized to trace one.
    pub fn project_nonzero(&self) -> Result<DensityOperator> {
        self.project_min_atoms(1)
    }

    /// `ρ''_AB`: only sectors with two or more atoms, renormalized.
    pub fn project_two_plus(&self) -> Result<DensityOperator> {
        self.project_min_atoms(2)
    }

    fn project_min_atoms(&self, min_atoms: u32) -> Result<DensityOperator> {
        let mut out = DensityOperator::zero(*self.block.geometry(), self.statistics);
        for ((i, j), v) in self.block.entries() {
            if i.total() >= min_atoms && j.total() >= min_atoms {
                out.insert(i.clone(), j.clone(), *v);
            }
        }
        let tr = out.trace();
        if tr <= SECTOR_COHERENCE_TOL {
            return Err(Error::VacuumSupportOnly);
        }
        out.scale(1.0 / tr);
        out.prune();
        Ok(out)
    }

    /// Raw `tr(ρ_AB O)` for a pair-space operator product, with sites `0 = A`
    /// and `1 = B`.
    pub fn raw_expectation(&self, product: &[crate::fock::LadderOp]) -> Result<C64> {
        self.block.raw_expectation(product)
    }

    /// Raw overlap `⟨φ|ρ_AB|φ⟩` with a sparse pair-space vector.
    pub fn raw_overlap(&self, vector: &[(FockState, C64)]) -> C64 {
        self.block.raw_overlap(vector)
    }

    /// `⟨n_A⟩` of the unnormalized block; equals `⟨N⟩` of the source state.
    pub fn raw_site_a_number(&self) -> f64 {
        self.block
            .entries()
            .iter()
            .filter(|((i, j), _)| i == j)
            .map(|((i, _), v)| v.re * (i.occ_modes()[0] as f64 + i.occ_modes()[2] as f64))
            .sum()
    }
}

/// Assembles `ρ_AB = Σ_m ρ_(m,m+x)` over all ring sites, so each site appears
/// once as `A` and once as `B`.
pub fn delocalized_rho_ab(rho: Rho<'_>, x: i64) -> Result<BipartiteReducedState> {
    let geom = *rho.geometry();
    let l = geom.sites();
    if x.rem_euclid(l as i64) == 0 {
        return Err(Error::ZeroOffset);
    }
    let mut block = DensityOperator::zero(pair_geometry(&geom), rho.statistics());
    for m in 0..l {
        let pair = restrict_to_pair(rho, m, x)?;
        block.add_scaled(&pair, 1.0)?;
    }
    block.prune();
    Ok(BipartiteReducedState {
        x,
        statistics: rho.statistics(),
        source_geometry: geom,
        block,
    })
}

/// Dense matrix of a pair block over the canonical pair basis, along with
/// the basis labels; used for serialization and the dense oracles.
pub fn pair_block_dense(block: &DensityOperator) -> (Vec<FockState>, nalgebra::DMatrix<C64>) {
    let basis = pair_basis(block.geometry().cap_for(block.statistics()));
    let dense = block.to_dense(&basis);
    (basis, dense)
}

/// Extracts the 4×4 internal-qubit block (basis `[aa, ab, ba, bb]`) of a pair
/// state as a genuine two-qubit tensor state, returning the block and the
/// weight that lives outside the one-atom-per-site subspace.
///
/// For fermions, regrouping the interleaved pair modes `(a_A, a_B, b_A, b_B)`
/// into `(A | B)` carries the grading sign `(−1)^{n_aB · n_bA}`, which flips
/// the `|ba⟩` component relative to the mode representation. Overlaps are
/// unchanged; the tensor structure matters for the entanglement oracles.
pub fn internal_qubit_block(block: &DensityOperator) -> (nalgebra::DMatrix<C64>, f64) {
    let basis = internal_qubit_basis();
    let sign = |idx: usize| -> f64 {
        if block.statistics() == Statistics::Fermion && idx == 2 {
            -1.0
        } else {
            1.0
        }
    };
    let mut m = nalgebra::DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
    for (r, i) in basis.iter().enumerate() {
        for (c, j) in basis.iter().enumerate() {
            if let Some(v) = block.entries().get(&(i.clone(), j.clone())) {
                m[(r, c)] = v * sign(r) * sign(c);
            }
        }
    }
    let inside: f64 = (0..4).map(|i| m[(i, i)].re).sum();
    let outside = block.trace() - inside;
    (m, outside)
}
