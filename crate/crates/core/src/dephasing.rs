//! Quadratic-field dephasing.
//!
//! An inhomogeneous field proportional to the squared site index gives every
//! basis state the phase `exp(i t Σ_m m² n_m)` (both internal levels phased
//! identically). A cross term of the internal witness that moves an atom
//! pair between sites `m` and `m'` then acquires the relative phase
//! `exp(i 2(m'−m)x t)`; averaging over a properly chosen set of times
//! cancels every `m ≠ m'` term while leaving the `m = m'` terms untouched,
//! reducing the unrestricted double sum to the restricted one.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Level, ManyBodyState, Rho};
use crate::tof::q_internal_direct;
use crate::C64;

/// A set of evolution times whose phase average cancels the displaced cross
/// terms at offset `x` on a ring of `sites` sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingSchedule {
    pub sites: usize,
    pub x: i64,
    pub times: Vec<f64>,
    /// Worst kernel modulus over all nulled frequencies, recorded at build
    /// time.
    pub kernel_bound: f64,
}

impl DephasingSchedule {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Averaging kernel `(1/M) Σ_j e^{iν t_j}` at angular frequency `ν`.
    pub fn kernel(&self, nu: f64) -> C64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &t in &self.times {
            acc += Complex64::from_polar(1.0, nu * t);
        }
        acc / self.times.len() as f64
    }
}

/// Applies the quadratic-field evolution for time `t`: each basis state
/// gains `exp(i t Σ_m m² n_m)` with `n_m` the total occupation at site `m`.
pub fn apply_quadratic_phase(state: &ManyBodyState, t: f64) -> ManyBodyState {
    let geom = *state.geometry();
    let components: Vec<_> = state
        .amplitudes()
        .iter()
        .map(|(k, amp)| {
            let phase: f64 = (0..geom.sites())
                .map(|m| (m * m) as f64 * k.site_total(&geom, m) as f64)
                .sum();
            (k.clone(), amp * Complex64::from_polar(1.0, t * phase))
        })
        .collect();
    let mut out = ManyBodyState::from_components(geom, state.statistics(), components)
        .expect("phases preserve the basis");
    out.set_truncated(state.truncated());
    out
}

/// Site-phase difference picked up by the hop `m → (m+x) mod L`: the ring
/// wrap makes this `m² − ((m+x) mod L)²` rather than the plain `−2mx − x²`.
fn hop_phase(l: usize, x: i64, m: usize) -> i64 {
    let target = ((m as i64 + x).rem_euclid(l as i64)) as i64;
    (m as i64) * (m as i64) - target * target
}

/// All relative frequencies `ν` that a cross term `(m, m')`, `m ≠ m'`, can
/// acquire on the ring.
fn cross_frequencies(l: usize, x: i64) -> Result<Vec<i64>> {
    let phases: Vec<i64> = (0..l).map(|m| hop_phase(l, x, m)).collect();
    let mut freqs = Vec::new();
    for m in 0..l {
        for mp in 0..l {
            if m == mp {
                continue;
            }
            let nu = phases[m] - phases[mp];
            if nu == 0 {
                return Err(Error::DegenerateSchedule(format!(
                    "sites {m} and {mp} acquire identical phases at offset {x}; \
                     the quadratic field cannot separate them"
                )));
            }
            freqs.push(nu);
        }
    }
    freqs.sort_unstable();
    freqs.dedup();
    Ok(freqs)
}

fn verify_kernel(schedule: &DephasingSchedule, freqs: &[i64]) -> f64 {
    let mut worst = 0.0f64;
    for &nu in freqs {
        worst = worst.max(schedule.kernel(nu as f64).norm());
    }
    // Plain displacement frequencies 2Δx must be nulled for every
    // 0 < |Δ| < L as well.
    let l = schedule.sites as i64;
    for delta in 1..l {
        for sign in [-1i64, 1] {
            let nu = 2 * schedule.x * delta * sign;
            if nu != 0 {
                worst = worst.max(schedule.kernel(nu as f64).norm());
            }
        }
    }
    worst
}

/// Builds an exact-nulling schedule for `(L, x)`.
///
/// The primary choice is the uniform grid `t_j = πj/(xM)`, `M = 2L − 1`,
/// which cancels every frequency `2Δx`. Ring wrap can produce cross-term
/// frequencies that are not multiples of `2x`; when the primary grid leaves
/// any realized frequency alive, the constructor falls back to the denser
/// uniform roots-of-unity grid `t_j = 2πj/M'` with `M'` past every realized
/// frequency, which nulls all of them exactly.
pub fn make_schedule(sites: usize, x: i64) -> Result<DephasingSchedule> {
    if sites < 2 {
        return Err(Error::InvalidGeometry(format!(
            "need at least 2 sites, got {sites}"
        )));
    }
    let xr = x.rem_euclid(sites as i64);
    if xr == 0 {
        return Err(Error::ZeroOffset);
    }
    let freqs = cross_frequencies(sites, x)?;

    let m = 2 * sites - 1;
    let primary = DephasingSchedule {
        sites,
        x,
        times: (0..m)
            .map(|j| std::f64::consts::PI * j as f64 / (xr as f64 * m as f64))
            .collect(),
        kernel_bound: 0.0,
    };
    let bound = verify_kernel(&primary, &freqs);
    if bound < 1e-12 {
        return Ok(DephasingSchedule {
            kernel_bound: bound,
            ..primary
        });
    }

    let max_freq = freqs
        .iter()
        .map(|&f| f.unsigned_abs())
        .max()
        .unwrap_or(0)
        .max(2 * xr.unsigned_abs() * (sites as u64 - 1));
    let mp = (max_freq + 1) as usize;
    let fallback = DephasingSchedule {
        sites,
        x,
        times: (0..mp)
            .map(|j| std::f64::consts::TAU * j as f64 / mp as f64)
            .collect(),
        kernel_bound: 0.0,
    };
    let bound = verify_kernel(&fallback, &freqs);
    if bound >= 1e-12 {
        return Err(Error::DegenerateSchedule(format!(
            "kernel bound {bound:.3e} after fallback grid"
        )));
    }
    Ok(DephasingSchedule {
        kernel_bound: bound,
        ..fallback
    })
}

/// Random-times mode: `M` uniform random times, suppressing (not nulling)
/// cross terms at the `1/√M` level. Kept for realism.
pub fn make_random_schedule(sites: usize, x: i64, m: usize, seed: u64) -> Result<DephasingSchedule> {
    use rand::prelude::*;
    if sites < 2 || m == 0 {
        return Err(Error::InvalidGeometry(
            "random schedule needs at least 2 sites and one time".into(),
        ));
    }
    if x.rem_euclid(sites as i64) == 0 {
        return Err(Error::ZeroOffset);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let times: Vec<f64> = (0..m)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let freqs = cross_frequencies(sites, x)?;
    let mut schedule = DephasingSchedule {
        sites,
        x,
        times,
        kernel_bound: 0.0,
    };
    schedule.kernel_bound = verify_kernel(&schedule, &freqs);
    Ok(schedule)
}

/// Schedule-averaged unrestricted internal witness:
/// `(1/M) Σ_j Q_x^{xy}(e^{iH t_j} ψ)`. With an exact-nulling schedule this
/// equals the restricted sum.
pub fn dephased_q_internal(
    state: &ManyBodyState,
    x: i64,
    levels: (Level, Level),
    schedule: &DephasingSchedule,
) -> Result<C64> {
    if schedule.sites != state.geometry().sites() || schedule.x != x {
        return Err(Error::ScheduleMismatch(format!(
            "schedule built for L={}, x={}, asked for L={}, x={x}",
            schedule.sites,
            schedule.x,
            state.geometry().sites()
        )));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for &t in &schedule.times {
        let phased = apply_quadratic_phase(state, t);
        acc += q_internal_direct(Rho::Pure(&phased), x, levels, false)?;
    }
    Ok(acc / schedule.times.len() as f64)
}
