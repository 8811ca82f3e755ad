//! Truncated second-quantized Fock space over a 1D ring of `L` sites with two
//! internal levels `a` and `b`.
//!
//! Basis states are occupation vectors over the canonical mode order
//! `a_0 … a_{L-1}, b_0 … b_{L-1}`. Bosonic ladder operators carry the usual
//! `√n` matrix elements; fermionic ones carry the parity sign of the occupied
//! modes preceding the target in the canonical order, which corresponds to
//! writing every basis state as an ordered creation string
//! `(c_0†)^{n_0} (c_1†)^{n_1} … |vac⟩`.
//!
//! All values are immutable after construction and all operations are pure
//! functions, so read-only sharing across parallel workers is safe.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{AMP_PRUNE, C64};

/// Particle statistics of the trapped atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

/// Internal level of an atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    A,
    B,
}

impl Level {
    pub const BOTH: [Level; 2] = [Level::A, Level::B];

    pub fn index(self) -> usize {
        match self {
            Level::A => 0,
            Level::B => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadderKind {
    Create,
    Annihilate,
}

/// One factor of an operator product: `(kind, site, level)`.
pub type LadderOp = (LadderKind, usize, Level);

/// Reverses a product and flips every ladder kind, i.e. forms `O†`.
pub fn dagger(product: &[LadderOp]) -> Vec<LadderOp> {
    product
        .iter()
        .rev()
        .map(|&(kind, site, level)| {
            let flipped = match kind {
                LadderKind::Create => LadderKind::Annihilate,
                LadderKind::Annihilate => LadderKind::Create,
            };
            (flipped, site, level)
        })
        .collect()
}

/// A ring of `sites` lattice sites with lattice constant `d` and a hard
/// per-(site, level) occupation cap.
///
/// The infinite lattice of the measurement protocol is modeled as a ring with
/// periodic site arithmetic; translational sums over `m` then stay exact at
/// finite size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    sites: usize,
    lattice_const: f64,
    max_occ: u8,
}

impl LatticeGeometry {
    pub fn new(sites: usize, lattice_const: f64, max_occ: u8) -> Result<Self> {
        if sites < 2 {
            return Err(Error::InvalidGeometry(format!(
                "need at least 2 sites, got {sites}"
            )));
        }
        if !(lattice_const > 0.0) || !lattice_const.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "lattice constant must be positive, got {lattice_const}"
            )));
        }
        if max_occ == 0 {
            return Err(Error::InvalidGeometry(
                "occupation cap must be at least 1".into(),
            ));
        }
        Ok(Self {
            sites,
            lattice_const,
            max_occ,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn lattice_const(&self) -> f64 {
        self.lattice_const
    }

    pub fn max_occ(&self) -> u8 {
        self.max_occ
    }

    /// Effective occupation cap: fermions are hard-capped at one atom per mode.
    pub fn cap_for(&self, statistics: Statistics) -> u8 {
        match statistics {
            Statistics::Boson => self.max_occ,
            Statistics::Fermion => 1,
        }
    }

    /// Periodic site arithmetic `m + x (mod L)` for signed offsets.
    pub fn wrap(&self, site: usize, offset: i64) -> usize {
        let l = self.sites as i64;
        (((site as i64 + offset) % l + l) % l) as usize
    }

    pub fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.sites {
            Err(Error::InvalidSite {
                site,
                sites: self.sites,
            })
        } else {
            Ok(())
        }
    }

    pub fn mode_count(&self) -> usize {
        2 * self.sites
    }

    /// Canonical flat mode index: all `a` modes by site, then all `b` modes.
    pub fn mode_index(&self, site: usize, level: Level) -> usize {
        level.index() * self.sites + site
    }
}

/// Occupation-number basis state: atom counts per (site, level) in the
/// canonical mode order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState(Box<[u8]>);

impl FockState {
    pub fn vacuum(geom: &LatticeGeometry) -> Self {
        FockState(vec![0u8; geom.mode_count()].into_boxed_slice())
    }

    pub fn from_occupations(occ: Vec<u8>) -> Self {
        FockState(occ.into_boxed_slice())
    }

    pub fn occ_modes(&self) -> &[u8] {
        &self.0
    }

    pub fn occ(&self, geom: &LatticeGeometry, site: usize, level: Level) -> u8 {
        self.0[geom.mode_index(site, level)]
    }

    pub fn with_occ(&self, geom: &LatticeGeometry, site: usize, level: Level, n: u8) -> Self {
        let mut v = self.0.to_vec();
        v[geom.mode_index(site, level)] = n;
        FockState(v.into_boxed_slice())
    }

    /// Total atom number of the basis state.
    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| n as u32).sum()
    }

    /// Atoms at one site, both levels combined.
    pub fn site_total(&self, geom: &LatticeGeometry, site: usize) -> u32 {
        self.occ(geom, site, Level::A) as u32 + self.occ(geom, site, Level::B) as u32
    }

    /// Number of defective sites, i.e. sites holding two or more atoms.
    pub fn defect_count(&self, geom: &LatticeGeometry) -> usize {
        (0..geom.sites())
            .filter(|&m| self.site_total(geom, m) >= 2)
            .count()
    }

    /// Human-readable label like `(1,0|0,1)` listing `(n_a,n_b)` per site.
    pub fn label(&self, geom: &LatticeGeometry) -> String {
        let parts: Vec<String> = (0..geom.sites())
            .map(|m| {
                format!(
                    "{},{}",
                    self.occ(geom, m, Level::A),
                    self.occ(geom, m, Level::B)
                )
            })
            .collect();
        format!("({})", parts.join("|"))
    }
}

/// Parity sign of the permutation taking occupied modes (listed in input
/// order) to ascending target-rank order. Ranks must be distinct.
fn permutation_sign(ranks: &[usize]) -> f64 {
    let mut inversions = 0usize;
    for i in 0..ranks.len() {
        for j in (i + 1)..ranks.len() {
            if ranks[i] > ranks[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A finite superposition of occupation basis states.
///
/// The amplitude map is sparse; amplitudes below [`AMP_PRUNE`] are dropped
/// after every operator application. `truncated` is a sticky flag set when a
/// bosonic creation ran into the occupation cap and the affected component
/// was mapped to zero.
#[derive(Debug, Clone)]
pub struct ManyBodyState {
    statistics: Statistics,
    geom: LatticeGeometry,
    amps: BTreeMap<FockState, C64>,
    truncated: bool,
}

impl ManyBodyState {
    pub fn vacuum(geom: LatticeGeometry, statistics: Statistics) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(FockState::vacuum(&geom), Complex64::new(1.0, 0.0));
        Self {
            statistics,
            geom,
            amps,
            truncated: false,
        }
    }

    /// Builds a state from explicit components, validating occupations against
    /// the effective cap.
    pub fn from_components<I>(
        geom: LatticeGeometry,
        statistics: Statistics,
        components: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (FockState, C64)>,
    {
        let cap = geom.cap_for(statistics);
        let mut amps = BTreeMap::new();
        for (state, amp) in components {
            if state.occ_modes().len() != geom.mode_count() {
                return Err(Error::DimensionMismatch(format!(
                    "basis state has {} modes, geometry wants {}",
                    state.occ_modes().len(),
                    geom.mode_count()
                )));
            }
            if state.occ_modes().iter().any(|&n| n > cap) {
                return Err(Error::FillingExceedsCap {
                    filling: *state.occ_modes().iter().max().unwrap(),
                    cap,
                });
            }
            if amp.norm_sqr() > 0.0 {
                *amps.entry(state).or_insert_with(|| Complex64::new(0.0, 0.0)) += amp;
            }
        }
        Ok(Self {
            statistics,
            geom,
            amps,
            truncated: false,
        })
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geom
    }

    pub fn amplitudes(&self) -> &BTreeMap<FockState, C64> {
        &self.amps
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Marks the state as having lost weight to the occupation cap; sticky.
    /// Builders set this themselves; deserializers restore it.
    pub fn mark_truncated(&mut self) {
        self.truncated = true;
    }

    pub(crate) fn set_truncated(&mut self, flag: bool) {
        self.truncated |= flag;
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.norm_sqr() <= 0.0
    }

    pub fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() >= AMP_PRUNE);
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 <= 0.0 {
            return Err(Error::ZeroState);
        }
        let inv = 1.0 / n2.sqrt();
        for a in self.amps.values_mut() {
            *a *= inv;
        }
        Ok(self)
    }

    pub fn scaled(mut self, factor: C64) -> Self {
        for a in self.amps.values_mut() {
            *a *= factor;
        }
        self
    }

    /// Component-wise sum of two states over the same space.
    pub fn add(&self, other: &ManyBodyState) -> Result<ManyBodyState> {
        if self.geom != other.geom || self.statistics != other.statistics {
            return Err(Error::DimensionMismatch(
                "cannot add states over different spaces".into(),
            ));
        }
        let mut out = self.clone();
        out.truncated |= other.truncated;
        for (k, v) in &other.amps {
            *out.amps
                .entry(k.clone())
                .or_insert_with(|| Complex64::new(0.0, 0.0)) += v;
        }
        out.prune();
        Ok(out)
    }

    /// Hilbert-space inner product ⟨self | other⟩.
    pub fn inner(&self, other: &ManyBodyState) -> C64 {
        let (small, big, conj_small) = if self.amps.len() <= other.amps.len() {
            (&self.amps, &other.amps, true)
        } else {
            (&other.amps, &self.amps, false)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, v) in small {
            if let Some(w) = big.get(k) {
                if conj_small {
                    acc += v.conj() * w;
                } else {
                    acc += w.conj() * v;
                }
            }
        }
        acc
    }

    /// Total-atom-number sectors populated by this state.
    pub fn number_sectors(&self) -> BTreeSet<u32> {
        self.amps.keys().map(|s| s.total()).collect()
    }

    /// A state spread over several total-number sectors is allowed as a
    /// mathematical object but flagged non-physical for witness evaluation.
    pub fn is_sector_mixing(&self) -> bool {
        self.number_sectors().len() > 1
    }

    /// Applies one ladder operator, returning the (unnormalized) image state.
    ///
    /// Bosonic creation beyond the cap maps the affected component to zero
    /// and sets the sticky truncation flag; the fermionic `a†² = 0` is exact
    /// algebra and does not flag.
    pub fn apply_ladder(&self, site: usize, level: Level, kind: LadderKind) -> Result<ManyBodyState> {
        let cap = self.geom.cap_for(self.statistics);
        self.apply_ladder_capped(site, level, kind, cap)
    }

    /// Ladder application in the untruncated algebra: bosonic occupations may
    /// exceed the state-construction cap. Expectation values of operator
    /// products go through this path so canonical commutators hold exactly
    /// even on at-cap components; the cap remains a constraint on *states*,
    /// not on the algebra.
    pub fn apply_ladder_unbounded(
        &self,
        site: usize,
        level: Level,
        kind: LadderKind,
    ) -> Result<ManyBodyState> {
        let cap = match self.statistics {
            Statistics::Boson => u8::MAX - 1,
            Statistics::Fermion => 1,
        };
        self.apply_ladder_capped(site, level, kind, cap)
    }

    fn apply_ladder_capped(
        &self,
        site: usize,
        level: Level,
        kind: LadderKind,
        cap: u8,
    ) -> Result<ManyBodyState> {
        self.geom.check_site(site)?;
        let j = self.geom.mode_index(site, level);
        let mut out = BTreeMap::new();
        let mut truncated = self.truncated;
        for (state, amp) in &self.amps {
            let n = state.occ_modes()[j];
            let (factor, next_n) = match (kind, self.statistics) {
                (LadderKind::Annihilate, Statistics::Boson) => {
                    if n == 0 {
                        continue;
                    }
                    ((n as f64).sqrt(), n - 1)
                }
                (LadderKind::Create, Statistics::Boson) => {
                    if n >= cap {
                        truncated = true;
                        continue;
                    }
                    (((n + 1) as f64).sqrt(), n + 1)
                }
                (LadderKind::Annihilate, Statistics::Fermion) => {
                    if n == 0 {
                        continue;
                    }
                    (fermi_sign(state, j), 0)
                }
                (LadderKind::Create, Statistics::Fermion) => {
                    if n == 1 {
                        continue;
                    }
                    (fermi_sign(state, j), 1)
                }
            };
            let mut occ = state.occ_modes().to_vec();
            occ[j] = next_n;
            let key = FockState::from_occupations(occ);
            *out.entry(key).or_insert_with(|| Complex64::new(0.0, 0.0)) += amp * factor;
        }
        let mut result = ManyBodyState {
            statistics: self.statistics,
            geom: self.geom,
            amps: out,
            truncated,
        };
        result.prune();
        Ok(result)
    }

    /// Applies an operator product written left-to-right (the rightmost factor
    /// acts first, as in the mathematical expression). Products act in the
    /// untruncated algebra.
    pub fn apply_product(&self, product: &[LadderOp]) -> Result<ManyBodyState> {
        let mut state = self.clone();
        for &(kind, site, level) in product.iter().rev() {
            state = state.apply_ladder_unbounded(site, level, kind)?;
            if state.amps.is_empty() {
                break;
            }
        }
        Ok(state)
    }

    /// ⟨O⟩ on this (assumed normalized) state; divides by the norm² so small
    /// normalization drift does not leak into witnesses.
    pub fn expectation(&self, product: &[LadderOp]) -> Result<C64> {
        let n2 = self.norm_sqr();
        if n2 <= 0.0 {
            return Err(Error::ZeroState);
        }
        let image = self.apply_product(product)?;
        Ok(self.inner(&image) / n2)
    }

    /// Ring translation by `shift` sites (occupations move from `m` to
    /// `m+shift`). Fermionic states pick up the permutation parity.
    pub fn translated(&self, shift: i64) -> ManyBodyState {
        let geom = self.geom;
        let l = geom.sites();
        let mut amps = BTreeMap::new();
        for (state, amp) in &self.amps {
            let mut occ = vec![0u8; geom.mode_count()];
            for level in Level::BOTH {
                for m in 0..l {
                    let src = geom.mode_index(m, level);
                    let dst = geom.mode_index(geom.wrap(m, shift), level);
                    occ[dst] = state.occ_modes()[src];
                }
            }
            let sign = match self.statistics {
                Statistics::Boson => 1.0,
                Statistics::Fermion => {
                    let ranks: Vec<usize> = (0..geom.mode_count())
                        .filter(|&j| state.occ_modes()[j] > 0)
                        .map(|j| {
                            let level = if j < l { Level::A } else { Level::B };
                            let site = j % l;
                            geom.mode_index(geom.wrap(site, shift), level)
                        })
                        .collect();
                    permutation_sign(&ranks)
                }
            };
            amps.insert(FockState::from_occupations(occ), amp * sign);
        }
        ManyBodyState {
            statistics: self.statistics,
            geom,
            amps,
            truncated: self.truncated,
        }
    }
}

fn fermi_sign(state: &FockState, mode: usize) -> f64 {
    let parity: u32 = state.occ_modes()[..mode].iter().map(|&n| n as u32).sum();
    if parity % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Applies the same internal-level rotation `U` to every atom on every site,
/// i.e. the global unitary `U ⊗ … ⊗ U` in second quantization:
/// `a_m† ↦ U_aa a_m† + U_ba b_m†` and `b_m† ↦ U_ab a_m† + U_bb b_m†`.
pub fn apply_internal_rotation(
    state: &ManyBodyState,
    u: &nalgebra::Matrix2<C64>,
) -> Result<ManyBodyState> {
    let defect = (u.adjoint() * u - nalgebra::Matrix2::identity()).norm();
    if defect > 1e-12 {
        return Err(Error::NonUnitary(defect));
    }
    let geom = *state.geometry();
    let stats = state.statistics();
    let mut out = ManyBodyState::from_components(geom, stats, [])?;
    for (basis, amp) in state.amplitudes() {
        // Rebuild the component as its ordered creation string with each
        // creator replaced by its rotated combination. Creators are applied
        // rightmost-first, i.e. in descending canonical mode order.
        let mut acc = ManyBodyState::vacuum(geom, stats).scaled(*amp);
        let mut norm_fix = 1.0;
        for j in (0..geom.mode_count()).rev() {
            let n = basis.occ_modes()[j];
            if n == 0 {
                continue;
            }
            let site = j % geom.sites();
            let level = if j < geom.sites() { Level::A } else { Level::B };
            for _ in 0..n {
                let up_a = acc.apply_ladder(site, Level::A, LadderKind::Create)?;
                let up_b = acc.apply_ladder(site, Level::B, LadderKind::Create)?;
                let col = level.index();
                acc = up_a.scaled(u[(0, col)]).add(&up_b.scaled(u[(1, col)]))?;
            }
            let mut fact = 1.0;
            for k in 1..=n as u64 {
                fact *= k as f64;
            }
            norm_fix *= fact.sqrt();
        }
        out = out.add(&acc.scaled(Complex64::new(1.0 / norm_fix, 0.0)))?;
    }
    out.prune();
    Ok(out)
}

/// Density operator as a sparse map `(i, j) → ⟨i|ρ|j⟩`.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    statistics: Statistics,
    geom: LatticeGeometry,
    entries: BTreeMap<(FockState, FockState), C64>,
}

impl DensityOperator {
    pub fn zero(geom: LatticeGeometry, statistics: Statistics) -> Self {
        Self {
            statistics,
            geom,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_pure(state: &ManyBodyState) -> Result<Self> {
        let n2 = state.norm_sqr();
        if n2 <= 0.0 {
            return Err(Error::ZeroState);
        }
        let mut entries = BTreeMap::new();
        for (i, a) in state.amplitudes() {
            for (j, b) in state.amplitudes() {
                entries.insert((i.clone(), j.clone()), a * b.conj() / n2);
            }
        }
        Ok(Self {
            statistics: state.statistics(),
            geom: *state.geometry(),
            entries,
        })
    }

    /// Convex mixture Σ pᵢ |ψᵢ⟩⟨ψᵢ| of normalized pure states.
    pub fn from_mixture(components: &[(f64, ManyBodyState)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptySupport);
        }
        let mut out = DensityOperator::zero(
            *components[0].1.geometry(),
            components[0].1.statistics(),
        );
        for (p, state) in components {
            if *p < 0.0 {
                return Err(Error::InvalidProbability(*p));
            }
            let pure = DensityOperator::from_pure(state)?;
            out.add_scaled(&pure, *p)?;
        }
        Ok(out)
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geom
    }

    pub fn entries(&self) -> &BTreeMap<(FockState, FockState), C64> {
        &self.entries
    }

    pub fn insert(&mut self, bra: FockState, ket: FockState, value: C64) {
        *self
            .entries
            .entry((bra, ket))
            .or_insert_with(|| Complex64::new(0.0, 0.0)) += value;
    }

    pub fn add_scaled(&mut self, other: &DensityOperator, factor: f64) -> Result<()> {
        if self.geom != other.geom || self.statistics != other.statistics {
            return Err(Error::DimensionMismatch(
                "cannot add density operators over different spaces".into(),
            ));
        }
        for (k, v) in &other.entries {
            *self
                .entries
                .entry(k.clone())
                .or_insert_with(|| Complex64::new(0.0, 0.0)) += v * factor;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.entries.values_mut() {
            *v *= factor;
        }
    }

    pub fn prune(&mut self) {
        self.entries.retain(|_, v| v.norm() >= AMP_PRUNE);
    }

    pub fn trace(&self) -> f64 {
        self.entries
            .iter()
            .filter(|((i, j), _)| i == j)
            .map(|(_, v)| v.re)
            .sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((i, j), v) in &self.entries {
            let t = self
                .entries
                .get(&(j.clone(), i.clone()))
                .copied()
                .unwrap_or_else(|| Complex64::new(0.0, 0.0));
            worst = worst.max((v - t.conj()).norm());
        }
        worst
    }

    /// Sorted list of basis states appearing in the support.
    pub fn support_basis(&self) -> Vec<FockState> {
        let mut set: BTreeSet<FockState> = BTreeSet::new();
        for (i, j) in self.entries.keys() {
            set.insert(i.clone());
            set.insert(j.clone());
        }
        set.into_iter().collect()
    }

    /// Dense matrix over an explicit basis ordering.
    pub fn to_dense(&self, basis: &[FockState]) -> nalgebra::DMatrix<C64> {
        let index: HashMap<&FockState, usize> =
            basis.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let mut m = nalgebra::DMatrix::from_element(basis.len(), basis.len(), C64::new(0.0, 0.0));
        for ((i, j), v) in &self.entries {
            if let (Some(&r), Some(&c)) = (index.get(i), index.get(j)) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Minimum eigenvalue on the support; the PSD tolerance check for states.
    pub fn min_eigenvalue(&self) -> f64 {
        let basis = self.support_basis();
        if basis.is_empty() {
            return 0.0;
        }
        let dense = self.to_dense(&basis);
        let herm = (dense.clone() + dense.adjoint()) * C64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        eig.eigenvalues.iter().fold(f64::INFINITY, |m, &e| m.min(e))
    }

    pub fn validate(&self, herm_tol: f64, psd_tol: f64) -> Result<()> {
        let h = self.hermiticity_defect();
        if h > herm_tol {
            return Err(Error::NonHermitian(h));
        }
        let min = self.min_eigenvalue();
        if min < -psd_tol {
            return Err(Error::NotPositive(min));
        }
        Ok(())
    }

    /// Raw (unnormalized) trace `tr(ρ O)`; the workhorse for the unnormalized
    /// delocalized two-site state whose expectations map one-to-one onto
    /// measurement sums.
    pub fn raw_expectation(&self, product: &[LadderOp]) -> Result<C64> {
        let mut image_cache: HashMap<FockState, ManyBodyState> = HashMap::new();
        let mut acc = Complex64::new(0.0, 0.0);
        for ((i, j), v) in &self.entries {
            // tr(ρO) = Σ_{i,j} ⟨i|ρ|j⟩ ⟨j|O|i⟩
            let image = match image_cache.get(i) {
                Some(img) => img,
                None => {
                    let ket = ManyBodyState::from_components(
                        self.geom,
                        self.statistics,
                        [(i.clone(), Complex64::new(1.0, 0.0))],
                    )?;
                    let img = ket.apply_product(product)?;
                    image_cache.insert(i.clone(), img);
                    image_cache.get(i).unwrap()
                }
            };
            if let Some(amp) = image.amplitudes().get(j) {
                acc += v * amp;
            }
        }
        Ok(acc)
    }

    /// Raw overlap ⟨φ|ρ|φ⟩ for a sparse vector `φ`.
    pub fn raw_overlap(&self, vector: &[(FockState, C64)]) -> C64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, ci) in vector {
            for (j, cj) in vector {
                if let Some(v) = self.entries.get(&(i.clone(), j.clone())) {
                    acc += ci.conj() * v * cj;
                }
            }
        }
        acc
    }

    pub fn total_number(&self) -> f64 {
        let tr = self.trace();
        if tr <= 0.0 {
            return 0.0;
        }
        self.entries
            .iter()
            .filter(|((i, j), _)| i == j)
            .map(|((i, _), v)| v.re * i.total() as f64)
            .sum::<f64>()
            / tr
    }

    pub fn number_sectors(&self) -> BTreeSet<u32> {
        self.entries
            .iter()
            .filter(|((i, j), _)| i == j)
            .map(|((i, _), _)| i.total())
            .collect()
    }

    pub fn is_sector_mixing(&self) -> bool {
        // Coherence between different total-number sectors is the non-physical
        // signature; diagonal weight in several sectors is fine.
        self.entries
            .iter()
            .any(|((i, j), v)| i.total() != j.total() && v.norm() > 1e-12)
    }
}

/// Borrowed view of a quantum state for expectation-value evaluation:
/// a pure state, an ensemble of pure states, or an explicit density matrix.
#[derive(Clone, Copy)]
pub enum Rho<'a> {
    Pure(&'a ManyBodyState),
    Ensemble(&'a [(f64, ManyBodyState)]),
    Matrix(&'a DensityOperator),
}

impl<'a> From<&'a ManyBodyState> for Rho<'a> {
    fn from(s: &'a ManyBodyState) -> Self {
        Rho::Pure(s)
    }
}

impl<'a> From<&'a DensityOperator> for Rho<'a> {
    fn from(d: &'a DensityOperator) -> Self {
        Rho::Matrix(d)
    }
}

impl<'a> From<&'a [(f64, ManyBodyState)]> for Rho<'a> {
    fn from(e: &'a [(f64, ManyBodyState)]) -> Self {
        Rho::Ensemble(e)
    }
}

impl<'a> Rho<'a> {
    pub fn geometry(&self) -> &LatticeGeometry {
        match self {
            Rho::Pure(s) => s.geometry(),
            Rho::Ensemble(e) => e[0].1.geometry(),
            Rho::Matrix(d) => d.geometry(),
        }
    }

    pub fn statistics(&self) -> Statistics {
        match self {
            Rho::Pure(s) => s.statistics(),
            Rho::Ensemble(e) => e[0].1.statistics(),
            Rho::Matrix(d) => d.statistics(),
        }
    }

    /// Normalized expectation value ⟨O⟩.
    pub fn expectation(&self, product: &[LadderOp]) -> Result<C64> {
        match self {
            Rho::Pure(s) => s.expectation(product),
            Rho::Ensemble(e) => {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut weight = 0.0;
                for (p, s) in e.iter() {
                    acc += s.expectation(product)? * *p;
                    weight += *p;
                }
                if weight <= 0.0 {
                    return Err(Error::EmptySupport);
                }
                Ok(acc / weight)
            }
            Rho::Matrix(d) => {
                let tr = d.trace();
                if tr <= 0.0 {
                    return Err(Error::EmptySupport);
                }
                Ok(d.raw_expectation(product)? / tr)
            }
        }
    }

    pub fn total_number(&self) -> f64 {
        match self {
            Rho::Pure(s) => {
                let n2 = s.norm_sqr();
                if n2 <= 0.0 {
                    return 0.0;
                }
                s.amplitudes()
                    .iter()
                    .map(|(k, a)| a.norm_sqr() * k.total() as f64)
                    .sum::<f64>()
                    / n2
            }
            Rho::Ensemble(e) => {
                let weight: f64 = e.iter().map(|(p, _)| p).sum();
                e.iter()
                    .map(|(p, s)| p * Rho::Pure(s).total_number())
                    .sum::<f64>()
                    / weight
            }
            Rho::Matrix(d) => d.total_number(),
        }
    }

    pub fn is_sector_mixing(&self) -> bool {
        match self {
            Rho::Pure(s) => s.is_sector_mixing(),
            Rho::Ensemble(e) => e.iter().any(|(_, s)| s.is_sector_mixing()),
            Rho::Matrix(d) => d.is_sector_mixing(),
        }
    }
}

/// Normalized expectation of an operator product; rejects zero-weight inputs.
pub fn expectation(rho: Rho<'_>, product: &[LadderOp]) -> Result<C64> {
    rho.expectation(product)
}

/// Normalized ⟨N⟩, the total atom number.
pub fn total_number(rho: Rho<'_>) -> f64 {
    rho.total_number()
}

/// Graded partial trace: keeps the listed sites (in the given order) and
/// traces out everything else, returning a density operator on a reduced
/// geometry with `sites.len()` sites.
///
/// For fermions every basis state is rewritten as (kept modes in the reduced
/// canonical order) ⊗ (environment modes in the original canonical order)
/// with the permutation parity attached; kept relative mode order makes every
/// even product of kept-mode ladder operators keep its expectation value
/// exactly, which is what the witness identities rely on.
pub fn reduce_to_sites(rho: Rho<'_>, sites: &[usize]) -> Result<DensityOperator> {
    let geom = *rho.geometry();
    let stats = rho.statistics();
    let l = geom.sites();
    if sites.is_empty() {
        return Err(Error::DimensionMismatch("no sites kept".into()));
    }
    let mut seen = vec![false; l];
    for &s in sites {
        geom.check_site(s)?;
        if seen[s] {
            return Err(Error::DimensionMismatch(format!(
                "site {s} listed twice in reduction"
            )));
        }
        seen[s] = true;
    }
    let k = sites.len();
    let reduced_geom = LatticeGeometry::new(k.max(2), geom.lattice_const(), geom.max_occ())?;
    // Position of each kept site in the output list.
    let mut kept_pos = vec![usize::MAX; l];
    for (i, &s) in sites.iter().enumerate() {
        kept_pos[s] = i;
    }
    // Target rank per input mode: kept modes first (reduced canonical order),
    // then environment modes in input canonical order.
    let mode_count = geom.mode_count();
    let mut target_rank = vec![0usize; mode_count];
    let mut env_modes = Vec::new();
    for j in 0..mode_count {
        let site = j % l;
        let level_idx = j / l;
        if kept_pos[site] != usize::MAX {
            target_rank[j] = level_idx * k + kept_pos[site];
        } else {
            target_rank[j] = 2 * k + env_modes.len();
            env_modes.push(j);
        }
    }

    // Split one basis state into (reduced part, environment key, sign).
    let split = |state: &FockState| -> (FockState, Vec<u8>, f64) {
        let occ = state.occ_modes();
        let mut part = vec![0u8; 2 * k.max(2)];
        for (i, &s) in sites.iter().enumerate() {
            part[i] = occ[geom.mode_index(s, Level::A)];
            part[k.max(2) + i] = occ[geom.mode_index(s, Level::B)];
        }
        let env: Vec<u8> = env_modes.iter().map(|&j| occ[j]).collect();
        let sign = match stats {
            Statistics::Boson => 1.0,
            Statistics::Fermion => {
                let ranks: Vec<usize> = (0..mode_count)
                    .filter(|&j| occ[j] > 0)
                    .map(|j| target_rank[j])
                    .collect();
                permutation_sign(&ranks)
            }
        };
        (FockState::from_occupations(part), env, sign)
    };

    let mut out = DensityOperator::zero(reduced_geom, stats);
    match rho {
        Rho::Pure(state) => {
            let n2 = state.norm_sqr();
            if n2 <= 0.0 {
                return Err(Error::ZeroState);
            }
            let mut buckets: BTreeMap<Vec<u8>, Vec<(FockState, C64)>> = BTreeMap::new();
            for (basis, amp) in state.amplitudes() {
                let (part, env, sign) = split(basis);
                buckets.entry(env).or_default().push((part, amp * sign));
            }
            for group in buckets.values() {
                for (pi, ai) in group {
                    for (pj, aj) in group {
                        out.insert(pi.clone(), pj.clone(), ai * aj.conj() / n2);
                    }
                }
            }
        }
        Rho::Ensemble(ensemble) => {
            let weight: f64 = ensemble.iter().map(|(p, _)| p).sum();
            if weight <= 0.0 {
                return Err(Error::EmptySupport);
            }
            for (p, state) in ensemble {
                let partial = reduce_to_sites(Rho::Pure(state), sites)?;
                out.add_scaled(&partial, p / weight)?;
            }
        }
        Rho::Matrix(rho_m) => {
            let tr = rho_m.trace();
            if tr <= 0.0 {
                return Err(Error::EmptySupport);
            }
            let mut split_cache: HashMap<FockState, (FockState, Vec<u8>, f64)> = HashMap::new();
            for ((i, j), v) in rho_m.entries() {
                let (pi, ei, si) = split_cache
                    .entry(i.clone())
                    .or_insert_with(|| split(i))
                    .clone();
                let (pj, ej, sj) = split_cache
                    .entry(j.clone())
                    .or_insert_with(|| split(j))
                    .clone();
                if ei == ej {
                    out.insert(pi, pj, v * si * sj / tr);
                }
            }
        }
    }
    out.prune();
    Ok(out)
}
