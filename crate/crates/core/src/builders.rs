//! Constructors for the named test states used throughout the measurement
//! scenarios, plus seeded random-state generators and defect injection with
//! an explicit (ε, r) budget.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    DensityOperator, FockState, LadderKind, LatticeGeometry, Level, ManyBodyState, Statistics,
};
use crate::C64;

/// Defect bookkeeping: `epsilon` bounds the expected number of defective
/// sites per atom, `r` caps the per-(site, level) occupation, and
/// `realized_defects` records how many sites an injector actually promoted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectBudget {
    pub epsilon: f64,
    pub r: u8,
    pub realized_defects: usize,
}

impl DefectBudget {
    pub fn new(epsilon: f64, r: u8) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidBudget(format!(
                "epsilon {epsilon} outside [0, 1]"
            )));
        }
        if r == 0 {
            return Err(Error::InvalidBudget("r must be at least 1".into()));
        }
        Ok(Self {
            epsilon,
            r,
            realized_defects: 0,
        })
    }

    /// Budget with no defects allowed; reduces every corrected bound to its
    /// ideal form.
    pub fn none() -> Self {
        Self {
            epsilon: 0.0,
            r: 1,
            realized_defects: 0,
        }
    }
}

/// The four Bell states over the internal-level qubit of two one-atom sites:
/// `φ± = (|a⟩|b⟩ ± |b⟩|a⟩)/√2`, `ψ± = (|a⟩|a⟩ ± |b⟩|b⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellLabel {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellLabel {
    /// (level on the first site, level on the second site, relative sign) of
    /// the two product components.
    fn components(self) -> ((Level, Level), (Level, Level), f64) {
        match self {
            BellLabel::PhiPlus => ((Level::A, Level::B), (Level::B, Level::A), 1.0),
            BellLabel::PhiMinus => ((Level::A, Level::B), (Level::B, Level::A), -1.0),
            BellLabel::PsiPlus => ((Level::A, Level::A), (Level::B, Level::B), 1.0),
            BellLabel::PsiMinus => ((Level::A, Level::A), (Level::B, Level::B), -1.0),
        }
    }
}

impl std::str::FromStr for BellLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phi+" | "phi_plus" | "phiplus" => Ok(BellLabel::PhiPlus),
            "phi-" | "phi_minus" | "phiminus" => Ok(BellLabel::PhiMinus),
            "psi+" | "psi_plus" | "psiplus" => Ok(BellLabel::PsiPlus),
            "psi-" | "psi_minus" | "psiminus" => Ok(BellLabel::PsiMinus),
            other => Err(Error::Unsupported(format!("unknown Bell label {other}"))),
        }
    }
}

/// Uniform integer filling of one level on every site.
pub fn build_mott(
    geom: LatticeGeometry,
    statistics: Statistics,
    filling: u8,
    level: Level,
) -> Result<ManyBodyState> {
    let cap = geom.cap_for(statistics);
    if filling > cap {
        return Err(Error::FillingExceedsCap { filling, cap });
    }
    let mut occ = vec![0u8; geom.mode_count()];
    for m in 0..geom.sites() {
        occ[geom.mode_index(m, level)] = filling;
    }
    ManyBodyState::from_components(
        geom,
        statistics,
        [(FockState::from_occupations(occ), C64::new(1.0, 0.0))],
    )
}

/// Normalized state proportional to `(Σ_m a_m†)^N |vac⟩`: every atom fully
/// delocalized over the ring. Truncation against the occupation cap is
/// applied before the final normalization.
pub fn build_delocalized_atoms(
    geom: LatticeGeometry,
    statistics: Statistics,
    n_atoms: u32,
) -> Result<ManyBodyState> {
    if n_atoms == 0 {
        return Err(Error::InvalidGeometry(
            "delocalized builder needs at least one atom".into(),
        ));
    }
    if statistics == Statistics::Fermion && n_atoms >= 2 {
        // (Σ a_m†)² vanishes identically by antisymmetry.
        return Err(Error::ZeroState);
    }
    let mut state = ManyBodyState::vacuum(geom, statistics);
    let mut truncated = false;
    for _ in 0..n_atoms {
        let mut next = state.clone().scaled(C64::new(0.0, 0.0));
        for m in 0..geom.sites() {
            let lifted = state.apply_ladder(m, Level::A, LadderKind::Create)?;
            truncated |= lifted.truncated();
            next = next.add(&lifted)?;
        }
        state = next;
    }
    let mut state = state.normalized()?;
    state.set_truncated(truncated);
    Ok(state)
}

/// Product of identical Bell pairs on the site blocks `(2ix, 2ix + x)`.
/// The blocks must tile the ring disjointly (for `x = 1` this needs even `L`);
/// the output has exactly one atom on every site.
pub fn build_bell_chain(
    geom: LatticeGeometry,
    statistics: Statistics,
    bell: BellLabel,
    pair_offset: usize,
) -> Result<ManyBodyState> {
    let l = geom.sites();
    if pair_offset == 0 || pair_offset % l == 0 {
        return Err(Error::ZeroOffset);
    }
    if l % 2 != 0 {
        return Err(Error::UnpairableChain {
            sites: l,
            offset: pair_offset,
        });
    }
    let mut covered = vec![false; l];
    let mut pairs = Vec::with_capacity(l / 2);
    for i in 0..l / 2 {
        let p = (2 * i * pair_offset) % l;
        let q = geom.wrap(p, pair_offset as i64);
        if covered[p] || covered[q] || p == q {
            return Err(Error::UnpairableChain {
                sites: l,
                offset: pair_offset,
            });
        }
        covered[p] = true;
        covered[q] = true;
        pairs.push((p, q));
    }
    let norm = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut state = ManyBodyState::vacuum(geom, statistics);
    for (p, q) in pairs {
        let ((l1, l2), (m1, m2), sign) = bell.components();
        let first = state
            .apply_ladder(q, l2, LadderKind::Create)?
            .apply_ladder(p, l1, LadderKind::Create)?;
        let second = state
            .apply_ladder(q, m2, LadderKind::Create)?
            .apply_ladder(p, m1, LadderKind::Create)?;
        state = first.scaled(norm).add(&second.scaled(norm * sign))?;
    }
    state.normalized()
}

/// True when every basis component holds exactly one atom on every site.
pub fn is_one_atom_per_site(state: &ManyBodyState) -> bool {
    let geom = state.geometry();
    state
        .amplitudes()
        .keys()
        .all(|k| (0..geom.sites()).all(|m| k.site_total(geom, m) == 1))
}

/// Randomly promotes sites by one extra atom, respecting the budget.
///
/// Each site (in seeded shuffled order) is promoted with probability ε;
/// promotions stop once `⌊ε·⟨N⟩⌋` sites were hit, so the realized defect
/// count never exceeds the appendix premise `D ≤ ε⟨N⟩`. Sites already at the
/// occupation cap `min(r, max_occ)` are skipped. The result is renormalized
/// and the realized count recorded in the returned budget.
pub fn inject_defects(
    state: &ManyBodyState,
    budget: DefectBudget,
    seed: u64,
) -> Result<(ManyBodyState, DefectBudget)> {
    let geom = *state.geometry();
    let cap = geom.cap_for(state.statistics());
    let r_cap = budget.r.min(cap);
    let n_atoms = crate::fock::Rho::Pure(state).total_number();
    let max_defects = (budget.epsilon * n_atoms).floor() as usize;
    let mut out = state.clone();
    let mut realized = 0usize;
    if budget.epsilon > 0.0 && max_defects > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sites: Vec<usize> = (0..geom.sites()).collect();
        sites.shuffle(&mut rng);
        let has_b = out
            .amplitudes()
            .keys()
            .any(|k| (0..geom.sites()).any(|m| k.occ(&geom, m, Level::B) > 0));
        for m in sites {
            if realized >= max_defects {
                break;
            }
            if rng.gen::<f64>() >= budget.epsilon {
                continue;
            }
            let level = if has_b && rng.gen::<bool>() {
                Level::B
            } else {
                Level::A
            };
            let promotable = out
                .amplitudes()
                .keys()
                .all(|k| k.occ(&geom, m, level) < r_cap);
            if !promotable {
                continue;
            }
            out = out.apply_ladder(m, level, LadderKind::Create)?;
            realized += 1;
        }
        out = out.normalized()?;
    }
    let mut spent = budget;
    spent.realized_defects = realized;
    Ok((out, spent))
}

/// Random pure state with a fixed total atom number, built from a handful of
/// random occupation vectors in that sector.
pub fn random_sector_state(
    geom: LatticeGeometry,
    statistics: Statistics,
    n_atoms: u32,
    components: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ManyBodyState> {
    let cap = geom.cap_for(statistics);
    let modes = geom.mode_count();
    if n_atoms > (cap as u32) * modes as u32 {
        return Err(Error::FillingExceedsCap {
            filling: cap.saturating_add(1),
            cap,
        });
    }
    let mut comps = Vec::with_capacity(components);
    let mut guard = 0;
    while comps.len() < components && guard < 10_000 {
        guard += 1;
        let mut occ = vec![0u8; modes];
        let mut left = n_atoms;
        while left > 0 {
            let j = rng.gen_range(0..modes);
            if occ[j] < cap {
                occ[j] += 1;
                left -= 1;
            }
        }
        comps.push((
            FockState::from_occupations(occ),
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
        ));
    }
    ManyBodyState::from_components(geom, statistics, comps)?.normalized()
}

/// Random one-atom-per-site state: a dense random vector over the internal
/// level configurations of the ring.
pub fn random_internal_state(
    geom: LatticeGeometry,
    statistics: Statistics,
    rng: &mut ChaCha8Rng,
) -> Result<ManyBodyState> {
    let l = geom.sites();
    let mut comps = Vec::with_capacity(1 << l);
    for mask in 0u64..(1u64 << l) {
        let mut occ = vec![0u8; geom.mode_count()];
        for m in 0..l {
            let level = if mask >> m & 1 == 0 { Level::A } else { Level::B };
            occ[geom.mode_index(m, level)] = 1;
        }
        comps.push((
            FockState::from_occupations(occ),
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
        ));
    }
    ManyBodyState::from_components(geom, statistics, comps)?.normalized()
}

/// Random occupation-diagonal density operator (separable by construction).
pub fn random_diagonal_density(
    geom: LatticeGeometry,
    statistics: Statistics,
    max_occ_used: u8,
    terms: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DensityOperator> {
    let cap = geom.cap_for(statistics).min(max_occ_used);
    let mut rho = DensityOperator::zero(geom, statistics);
    let mut weight_total = 0.0;
    for _ in 0..terms {
        let occ: Vec<u8> = (0..geom.mode_count())
            .map(|_| rng.gen_range(0..=cap))
            .collect();
        let w = rng.gen::<f64>() + 1e-3;
        weight_total += w;
        let k = FockState::from_occupations(occ);
        rho.insert(k.clone(), k, C64::new(w, 0.0));
    }
    rho.scale(1.0 / weight_total);
    Ok(rho)
}

/// Seeded convenience wrapper around [`random_sector_state`].
pub fn random_sector_state_seeded(
    geom: LatticeGeometry,
    statistics: Statistics,
    n_atoms: u32,
    components: usize,
    seed: u64,
) -> Result<ManyBodyState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_sector_state(geom, statistics, n_atoms, components, &mut rng)
}

/// Seeded convenience wrapper around [`random_internal_state`].
pub fn random_internal_state_seeded(
    geom: LatticeGeometry,
    statistics: Statistics,
    seed: u64,
) -> Result<ManyBodyState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_internal_state(geom, statistics, &mut rng)
}

/// Haar-ish random 2×2 unitary from Gram-Schmidt on a Gaussian matrix.
pub fn random_unitary2(rng: &mut ChaCha8Rng) -> nalgebra::Matrix2<C64> {
    use rand_distr::StandardNormal;
    let mut g = || -> C64 { C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) };
    let c1 = nalgebra::Vector2::new(g(), g());
    let mut c2 = nalgebra::Vector2::new(g(), g());
    let n1 = c1.norm();
    let e1 = c1 / C64::new(n1, 0.0);
    let overlap = e1.dotc(&c2);
    c2 -= e1 * overlap;
    let e2 = c2.clone() / C64::new(c2.norm(), 0.0);
    nalgebra::Matrix2::new(e1[0], e2[0], e1[1], e2[1])
}
