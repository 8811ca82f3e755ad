//! Randomized maximization of the delocalized pair entanglement over
//! unit-filled two-level ring states.
//!
//! Translational averaging in `ρ_AB = Σ_m ρ_(m,m+x)` forces the same pair
//! state on every site pair, so monogamy caps how entangled the normalized
//! block can get as the ring grows. This module searches for the best value
//! at a given ring size: states are dense vectors over the `2^L` internal
//! level configurations (bit `m` set means level `b` at site `m`), the
//! objective is the Wootters entanglement of `ρ_AB / L`, and the search runs
//! a momentum-projected stochastic hill climb from structured and random
//! starts.
//!
//! Restricting to momentum eigenstates is justified by symmetrization: any
//! state and its translates share one `ρ_AB`, mixing translates dephases the
//! state into momentum blocks, and convexity of the entanglement then puts
//! the maximum on a momentum eigenstate.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::wootters_eof;
use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RingSearchResult {
    pub sites: usize,
    pub offset: usize,
    pub best_eof: f64,
    pub evaluations: u64,
}

/// Normalized delocalized pair block `ρ_AB / L` of a unit-filled qubit-ring
/// state, over the internal basis `[aa, ab, ba, bb]`.
pub fn qubit_ring_pair_block(state: &[C64], sites: usize, offset: usize) -> DMatrix<C64> {
    let dim = 1usize << sites;
    assert_eq!(state.len(), dim);
    let mut block = DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
    let mut buckets = vec![[Complex64::new(0.0, 0.0); 4]; dim >> 2];
    for m in 0..sites {
        let p = (m + offset) % sites;
        for bucket in buckets.iter_mut() {
            *bucket = [Complex64::new(0.0, 0.0); 4];
        }
        for (i, &amp) in state.iter().enumerate() {
            let s = (((i >> m) & 1) << 1) | ((i >> p) & 1);
            let mut env = 0usize;
            let mut shift = 0;
            for site in 0..sites {
                if site == m || site == p {
                    continue;
                }
                env |= ((i >> site) & 1) << shift;
                shift += 1;
            }
            buckets[env][s] += amp;
        }
        for bucket in buckets.iter() {
            for a in 0..4 {
                if bucket[a].norm_sqr() == 0.0 {
                    continue;
                }
                for b in 0..4 {
                    block[(a, b)] += bucket[a] * bucket[b].conj();
                }
            }
        }
    }
    block / Complex64::new(sites as f64, 0.0)
}

fn normalize(state: &mut [C64]) -> bool {
    let norm: f64 = state.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return false;
    }
    for c in state.iter_mut() {
        *c /= Complex64::new(norm, 0.0);
    }
    true
}

/// Projects onto the momentum-`q` sector of the ring translation.
fn project_momentum(state: &[C64], sites: usize, q: usize) -> Vec<C64> {
    let dim = state.len();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for j in 0..sites {
        let phase = Complex64::from_polar(
            1.0 / sites as f64,
            -std::f64::consts::TAU * (q * j) as f64 / sites as f64,
        );
        for i in 0..dim {
            // Translate bit pattern i by j sites.
            let shifted = ((i << j) | (i >> (sites - j))) & (dim - 1);
            out[shifted] += state[i] * phase;
        }
    }
    out
}

fn eof_objective(state: &[C64], sites: usize, offset: usize) -> f64 {
    let block = qubit_ring_pair_block(state, sites, offset);
    wootters_eof(&block).unwrap_or(0.0)
}

/// Dimer covering of singlets on the pairs `(start, start+1), (start+2, …)`.
fn dimer_state(sites: usize, start: usize) -> Vec<C64> {
    let dim = 1usize << sites;
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    let pairs: Vec<(usize, usize)> = (0..sites / 2)
        .map(|i| ((start + 2 * i) % sites, (start + 2 * i + 1) % sites))
        .collect();
    'outer: for i in 0..dim {
        let mut sign = 1.0;
        for &(p, q) in &pairs {
            let (bp, bq) = ((i >> p) & 1, (i >> q) & 1);
            if bp == bq {
                continue 'outer;
            }
            if bp == 1 {
                sign = -sign;
            }
        }
        out[i] = Complex64::new(sign, 0.0);
    }
    normalize(&mut out);
    out
}

/// One-magnon state at momentum π (alternating-sign single flips).
fn magnon_state(sites: usize) -> Vec<C64> {
    let dim = 1usize << sites;
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for m in 0..sites {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        out[1 << m] = Complex64::new(sign, 0.0);
    }
    normalize(&mut out);
    out
}

fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let mut out: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    normalize(&mut out);
    out
}

/// Stochastic hill climb in the full space restricted to one momentum
/// sector by projection after every kick.
fn refine(
    start: &[C64],
    sites: usize,
    offset: usize,
    q: usize,
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, u64) {
    let dim = start.len();
    let mut current = project_momentum(start, sites, q);
    if !normalize(&mut current) {
        return (0.0, 0);
    }
    let mut best = eof_objective(&current, sites, offset);
    let mut evals = 1u64;
    let mut sigma = 0.4;
    let mut stale = 0u32;
    for _ in 0..iters {
        let mut trial = current.clone();
        let kicks = 1 + rng.gen_range(0..4);
        for _ in 0..kicks {
            let idx = rng.gen_range(0..dim);
            trial[idx] += C64::new(
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
            );
        }
        let mut projected = project_momentum(&trial, sites, q);
        if !normalize(&mut projected) {
            continue;
        }
        let value = eof_objective(&projected, sites, offset);
        evals += 1;
        if value > best + 1e-12 {
            best = value;
            current = projected;
            stale = 0;
        } else {
            stale += 1;
            if stale >= 30 {
                sigma *= 0.7;
                stale = 0;
                if sigma < 1e-5 {
                    break;
                }
            }
        }
    }
    (best, evals)
}

/// Orthonormal basis of the joint (momentum `q`, magnon number `w`) sector:
/// one momentum-symmetrized vector per translation orbit of the weight-`w`
/// configurations, kept when the orbit period is compatible with `q`.
fn sector_basis(sites: usize, q: usize, w: u32) -> Vec<Vec<C64>> {
    let dim = 1usize << sites;
    let mask = dim - 1;
    let rotate = |i: usize, j: usize| ((i << j) | (i >> (sites - j))) & mask;
    let mut seen = vec![false; dim];
    let mut basis = Vec::new();
    for rep in 0..dim {
        if seen[rep] || rep.count_ones() != w {
            continue;
        }
        // Collect the orbit and its period.
        let mut orbit = Vec::with_capacity(sites);
        let mut period = sites;
        for j in 0..sites {
            let t = rotate(rep, j);
            if j > 0 && t == rep {
                period = j;
                break;
            }
            orbit.push(t);
        }
        for &t in &orbit {
            seen[t] = true;
        }
        // Momentum q lives on this orbit only when q·period ≡ 0 (mod L).
        if (q * period) % sites != 0 {
            continue;
        }
        let mut vector = vec![Complex64::new(0.0, 0.0); dim];
        for (j, &t) in orbit.iter().enumerate() {
            vector[t] += Complex64::from_polar(
                1.0,
                -std::f64::consts::TAU * (q * j) as f64 / sites as f64,
            );
        }
        if normalize(&mut vector) {
            basis.push(vector);
        }
    }
    basis
}

/// Hill climb on the coefficients of an orthonormal sector basis; the tiny
/// parameter space makes these walks converge far faster than full-space
/// kicks.
fn refine_in_basis(
    basis: &[Vec<C64>],
    sites: usize,
    offset: usize,
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, u64) {
    if basis.is_empty() {
        return (0.0, 0);
    }
    let dim = basis[0].len();
    let nb = basis.len();
    let assemble = |coeffs: &[C64]| -> Vec<C64> {
        let mut state = vec![Complex64::new(0.0, 0.0); dim];
        for (c, b) in coeffs.iter().zip(basis.iter()) {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            for (s, &v) in state.iter_mut().zip(b.iter()) {
                *s += c * v;
            }
        }
        state
    };
    let normalize_coeffs = |coeffs: &mut [C64]| -> bool {
        let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return false;
        }
        for c in coeffs.iter_mut() {
            *c /= Complex64::new(norm, 0.0);
        }
        true
    };
    let mut coeffs: Vec<C64> = (0..nb)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    if !normalize_coeffs(&mut coeffs) {
        return (0.0, 0);
    }
    let mut best = eof_objective(&assemble(&coeffs), sites, offset);
    let mut evals = 1u64;
    let mut sigma = 0.5;
    let mut stale = 0u32;
    let mut reheated = false;
    for _ in 0..iters {
        let mut trial = coeffs.clone();
        let kicks = 1 + rng.gen_range(0..2);
        for _ in 0..kicks {
            let idx = rng.gen_range(0..nb);
            trial[idx] += C64::new(
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
            );
        }
        if !normalize_coeffs(&mut trial) {
            continue;
        }
        let value = eof_objective(&assemble(&trial), sites, offset);
        evals += 1;
        if value > best + 1e-12 {
            best = value;
            coeffs = trial;
            stale = 0;
        } else {
            stale += 1;
            if stale >= 40 {
                sigma *= 0.7;
                stale = 0;
                if sigma < 1e-6 {
                    if reheated {
                        break;
                    }
                    reheated = true;
                    sigma = 0.08;
                }
            }
        }
    }
    (best, evals)
}

/// Best entanglement of `ρ'_AB` found over unit-filled ring states at the
/// given offset: momentum-projected hill climbs from dimer, magnon, and
/// random starts across every momentum sector.
pub fn max_delocalized_pair_eof(
    sites: usize,
    offset: usize,
    iters: usize,
    random_restarts: usize,
    seed: u64,
) -> Result<RingSearchResult> {
    if sites < 2 || sites > 16 {
        return Err(Error::InvalidGeometry(format!(
            "ring search supports 2..=16 sites, got {sites}"
        )));
    }
    if offset == 0 || offset % sites == 0 {
        return Err(Error::ZeroOffset);
    }
    let dim = 1usize << sites;
    enum Task {
        Full {
            q: usize,
            seed: u64,
            start: Option<Vec<C64>>,
        },
        Sector {
            q: usize,
            weight: u32,
            seed: u64,
        },
    }
    let mut tasks: Vec<Task> = Vec::new();
    for q in 0..sites {
        let mut structured: Vec<Vec<C64>> = vec![magnon_state(sites)];
        if sites % 2 == 0 {
            structured.push(dimer_state(sites, 0));
            structured.push(dimer_state(sites, 1));
            let mut rvb: Vec<C64> = dimer_state(sites, 0)
                .iter()
                .zip(dimer_state(sites, 1).iter())
                .map(|(a, b)| a + b)
                .collect();
            if normalize(&mut rvb) {
                structured.push(rvb);
            }
        }
        for (i, s) in structured.into_iter().enumerate() {
            tasks.push(Task::Full {
                q,
                seed: seed ^ ((q as u64) << 32) ^ i as u64,
                start: Some(s),
            });
        }
        for r in 0..random_restarts {
            tasks.push(Task::Full {
                q,
                seed: seed ^ ((q as u64) << 32) ^ (0x1000 + r as u64),
                start: None,
            });
        }
        // Fixed magnon-number walks over explicit orbit bases: small
        // coefficient spaces where the extremal states live.
        for weight in 1..sites as u32 {
            for r in 0..2u64 {
                tasks.push(Task::Sector {
                    q,
                    weight,
                    seed: seed ^ ((q as u64) << 32) ^ ((weight as u64) << 16) ^ (0x2000 + r),
                });
            }
        }
    }
    let outcomes: Vec<(f64, u64)> = tasks
        .into_par_iter()
        .map(|task| match task {
            Task::Full {
                q,
                seed: task_seed,
                start,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
                let start = start.unwrap_or_else(|| random_state(dim, &mut rng));
                refine(&start, sites, offset, q, iters, &mut rng)
            }
            Task::Sector {
                q,
                weight,
                seed: task_seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
                let basis = sector_basis(sites, q, weight);
                refine_in_basis(&basis, sites, offset, iters, &mut rng)
            }
        })
        .collect();
    let mut best = 0.0f64;
    let mut evals = 0u64;
    for (value, n) in outcomes {
        best = best.max(value);
        evals += n;
    }
    Ok(RingSearchResult {
        sites,
        offset,
        best_eof: best,
        evaluations: evals,
    })
}
