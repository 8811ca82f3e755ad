//! Shared test support: an index-arithmetic dense-vector Fock oracle that is
//! independent of the sparse amplitude-map implementation path, plus random
//! state families for the randomized sweeps.
//!
//! The dense oracle keeps per-mode occupation digits with explicit headroom
//! above the state cap so operator products act in the untruncated algebra.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tofwit::fock::{FockState, LadderKind, LatticeGeometry, Level, ManyBodyState, Statistics};
use tofwit::C64;

/// Dense Fock space over `2L` modes with occupation digits `0..base`.
pub struct DenseSpace {
    pub sites: usize,
    pub base: usize,
    pub statistics: Statistics,
    pub dim: usize,
}

impl DenseSpace {
    /// `headroom` extra occupation levels above the state cap keep operator
    /// products exact.
    pub fn new(sites: usize, cap: u8, headroom: u8, statistics: Statistics) -> Self {
        let base = match statistics {
            Statistics::Boson => (cap + headroom) as usize + 1,
            Statistics::Fermion => 2,
        };
        let dim = base.pow(2 * sites as u32);
        assert!(dim <= 1 << 24, "dense oracle space too large");
        Self {
            sites,
            base,
            statistics,
            dim,
        }
    }

    pub fn modes(&self) -> usize {
        2 * self.sites
    }

    pub fn digit(&self, index: usize, mode: usize) -> usize {
        (index / self.base.pow(mode as u32)) % self.base
    }

    pub fn with_digit(&self, index: usize, mode: usize, value: usize) -> usize {
        let stride = self.base.pow(mode as u32) as i64;
        let old = self.digit(index, mode) as i64;
        (index as i64 + (value as i64 - old) * stride) as usize
    }

    pub fn mode_index(&self, site: usize, level: Level) -> usize {
        level.index() * self.sites + site
    }

    fn prefix_parity(&self, index: usize, mode: usize) -> f64 {
        let mut parity = 0usize;
        for m in 0..mode {
            parity += self.digit(index, m);
        }
        if parity % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn apply_ladder(
        &self,
        vector: &[C64],
        site: usize,
        level: Level,
        kind: LadderKind,
    ) -> Vec<C64> {
        let mode = self.mode_index(site, level);
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for (i, &amp) in vector.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let n = self.digit(i, mode);
            match (kind, self.statistics) {
                (LadderKind::Annihilate, Statistics::Boson) => {
                    if n > 0 {
                        out[self.with_digit(i, mode, n - 1)] += amp * (n as f64).sqrt();
                    }
                }
                (LadderKind::Create, Statistics::Boson) => {
                    if n + 1 < self.base {
                        out[self.with_digit(i, mode, n + 1)] += amp * ((n + 1) as f64).sqrt();
                    } else {
                        panic!("dense oracle ran out of occupation headroom");
                    }
                }
                (LadderKind::Annihilate, Statistics::Fermion) => {
                    if n == 1 {
                        out[self.with_digit(i, mode, 0)] += amp * self.prefix_parity(i, mode);
                    }
                }
                (LadderKind::Create, Statistics::Fermion) => {
                    if n == 0 {
                        out[self.with_digit(i, mode, 1)] += amp * self.prefix_parity(i, mode);
                    }
                }
            }
        }
        out
    }

    pub fn apply_product(&self, vector: &[C64], product: &[(LadderKind, usize, Level)]) -> Vec<C64> {
        let mut v = vector.to_vec();
        for &(kind, site, level) in product.iter().rev() {
            v = self.apply_ladder(&v, site, level, kind);
        }
        v
    }

    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.conj() * y)
            .fold(Complex64::new(0.0, 0.0), |acc, v| acc + v)
    }

    pub fn expectation(&self, vector: &[C64], product: &[(LadderKind, usize, Level)]) -> C64 {
        let image = self.apply_product(vector, product);
        self.inner(vector, &image) / self.inner(vector, vector).re
    }

    /// Imports a sparse state into the dense representation.
    pub fn from_state(&self, state: &ManyBodyState) -> Vec<C64> {
        let geom = state.geometry();
        assert_eq!(geom.sites(), self.sites);
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for (k, &amp) in state.amplitudes() {
            let mut index = 0usize;
            for mode in 0..self.modes() {
                let occ = k.occ_modes()[mode] as usize;
                assert!(occ < self.base);
                index += occ * self.base.pow(mode as u32);
            }
            out[index] = amp;
        }
        out
    }

    /// Graded partial trace onto the `(m, p)` pair, in the pair-basis layout
    /// `(n_aA, n_aB, n_bA, n_bB)` with digits up to the state cap.
    pub fn reduce_pair(
        &self,
        vector: &[C64],
        m: usize,
        p: usize,
        cap: u8,
    ) -> nalgebra::DMatrix<C64> {
        let pair_modes = [
            self.mode_index(m, Level::A),
            self.mode_index(p, Level::A),
            self.mode_index(m, Level::B),
            self.mode_index(p, Level::B),
        ];
        let pb = cap as usize + 1;
        let pdim = pb.pow(4);
        let pair_index = |i: usize| -> Option<usize> {
            let mut idx = 0usize;
            for (slot, &mode) in pair_modes.iter().enumerate() {
                let n = self.digit(i, mode);
                if n >= pb {
                    return None;
                }
                idx += n * pb.pow(slot as u32);
            }
            Some(idx)
        };
        let env_index = |i: usize| -> usize {
            let mut idx = 0usize;
            let mut stride = 1usize;
            for mode in 0..self.modes() {
                if pair_modes.contains(&mode) {
                    continue;
                }
                idx += self.digit(i, mode) * stride;
                stride *= self.base;
            }
            idx
        };
        let sign = |i: usize| -> f64 {
            if self.statistics == Statistics::Boson {
                return 1.0;
            }
            // Rank kept modes first (in pair order), environment after, and
            // count inversions among occupied modes.
            let mut ranks = Vec::new();
            let mut env_rank = pair_modes.len();
            for mode in 0..self.modes() {
                if self.digit(i, mode) == 0 {
                    continue;
                }
                if let Some(slot) = pair_modes.iter().position(|&pm| pm == mode) {
                    ranks.push(slot);
                } else {
                    ranks.push(env_rank);
                    env_rank += 1;
                }
            }
            let mut inversions = 0;
            for a in 0..ranks.len() {
                for b in (a + 1)..ranks.len() {
                    if ranks[a] > ranks[b] {
                        inversions += 1;
                    }
                }
            }
            if inversions % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let mut buckets: std::collections::HashMap<usize, Vec<(usize, C64)>> =
            std::collections::HashMap::new();
        for (i, &amp) in vector.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            if let Some(pidx) = pair_index(i) {
                buckets
                    .entry(env_index(i))
                    .or_default()
                    .push((pidx, amp * sign(i)));
            }
        }
        let mut rho = nalgebra::DMatrix::from_element(pdim, pdim, Complex64::new(0.0, 0.0));
        for group in buckets.values() {
            for &(pi, ai) in group {
                for &(pj, aj) in group {
                    rho[(pi, pj)] += ai * aj.conj();
                }
            }
        }
        rho
    }

    /// Index of a pair-basis state in the layout used by [`reduce_pair`].
    pub fn pair_index(&self, cap: u8, occ: [u8; 4]) -> usize {
        let pb = cap as usize + 1;
        occ.iter()
            .enumerate()
            .map(|(slot, &n)| n as usize * pb.pow(slot as u32))
            .sum()
    }
}

/// Random one-atom-per-site state over both levels.
pub fn random_internal(geom: LatticeGeometry, stats: Statistics, rng: &mut ChaCha8Rng) -> ManyBodyState {
    tofwit::builders::random_internal_state(geom, stats, rng).unwrap()
}

/// Random pure state in a fixed atom-number sector with small support.
pub fn random_sector(
    geom: LatticeGeometry,
    stats: Statistics,
    atoms: u32,
    rng: &mut ChaCha8Rng,
) -> ManyBodyState {
    let comps = 3 + (rng.gen::<u32>() % 6) as usize;
    tofwit::builders::random_sector_state(geom, stats, atoms, comps, rng).unwrap()
}

/// Random single-level (level `a` only) state in a fixed sector.
pub fn random_single_level(
    geom: LatticeGeometry,
    stats: Statistics,
    atoms: u32,
    rng: &mut ChaCha8Rng,
) -> ManyBodyState {
    let cap = geom.cap_for(stats);
    let modes = geom.sites();
    let comps = 3 + (rng.gen::<u32>() % 5) as usize;
    let mut components = Vec::new();
    for _ in 0..comps {
        let mut occ = vec![0u8; geom.mode_count()];
        let mut left = atoms;
        let mut guard = 0;
        while left > 0 && guard < 1000 {
            guard += 1;
            let site = rng.gen_range(0..modes);
            let idx = geom.mode_index(site, Level::A);
            if occ[idx] < cap {
                occ[idx] += 1;
                left -= 1;
            }
        }
        components.push((
            FockState::from_occupations(occ),
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
        ));
    }
    ManyBodyState::from_components(geom, stats, components)
        .unwrap()
        .normalized()
        .unwrap()
}

pub fn geom(l: usize, cap: u8) -> LatticeGeometry {
    LatticeGeometry::new(l, 1.0, cap).unwrap()
}
