//! Momentum-space Wannier envelopes and the uniform quadrature grid.
//!
//! Both models share the phase structure `ŵ_n(k) = e^{-iknd} ŵ_0(k)`, so a
//! site shift is a pure momentum phase. The ideal band-limited envelope has
//! `|ŵ_0(k)|² = d/2π` on one Brillouin zone and makes displaced Wannier
//! functions exactly orthogonal; the Gaussian model leaks
//! `e^{-(Δd)²/(4σ²)}` per displaced pair and quantifies the systematic error
//! of a realistic trap.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default Gaussian width relative to the lattice constant.
pub const DEFAULT_GAUSSIAN_SIGMA_OVER_D: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum EnvelopeModel {
    IdealBandlimited,
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WannierEnvelope {
    pub model: EnvelopeModel,
    pub lattice_const: f64,
}

impl WannierEnvelope {
    pub fn ideal(lattice_const: f64) -> Self {
        Self {
            model: EnvelopeModel::IdealBandlimited,
            lattice_const,
        }
    }

    pub fn gaussian(lattice_const: f64, sigma: f64) -> Self {
        Self {
            model: EnvelopeModel::Gaussian { sigma },
            lattice_const,
        }
    }

    pub fn default_gaussian(lattice_const: f64) -> Self {
        Self::gaussian(
            lattice_const,
            DEFAULT_GAUSSIAN_SIGMA_OVER_D * lattice_const,
        )
    }

    /// `|ŵ_0(k)|²`, normalized so its k-integral is one.
    pub fn abs2(&self, k: f64) -> f64 {
        let d = self.lattice_const;
        match self.model {
            EnvelopeModel::IdealBandlimited => {
                if k.abs() <= PI / d + 1e-12 {
                    d / (2.0 * PI)
                } else {
                    0.0
                }
            }
            EnvelopeModel::Gaussian { sigma } => {
                (sigma * sigma / PI).sqrt() * (-k * k * sigma * sigma).exp()
            }
        }
    }

    pub fn peak_abs2(&self) -> f64 {
        self.abs2(0.0)
    }

    /// Exact overlap `∫ dk ŵ_Δ(k) ŵ_0(k)*` of Wannier functions displaced by
    /// `Δ` sites: `δ_{Δ,0}` for the ideal model, `e^{-(Δd)²/(4σ²)}` for the
    /// Gaussian one.
    pub fn displaced_overlap(&self, delta: i64) -> f64 {
        match self.model {
            EnvelopeModel::IdealBandlimited => {
                if delta == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            EnvelopeModel::Gaussian { sigma } => {
                let y = delta as f64 * self.lattice_const;
                (-y * y / (4.0 * sigma * sigma)).exp()
            }
        }
    }

    /// Half-width of the region where `|ŵ_0|²` stays above `1e-10` of its peak.
    pub fn support_kmax(&self) -> f64 {
        match self.model {
            EnvelopeModel::IdealBandlimited => PI / self.lattice_const,
            EnvelopeModel::Gaussian { sigma } => (10.0 * std::f64::consts::LN_10).sqrt() / sigma,
        }
    }

    /// Grid that satisfies the coverage and normalization invariants and
    /// resolves every site-difference phase on a ring of `sites` sites.
    ///
    /// For the ideal envelope the interval count is a multiple large enough
    /// that the periodic trapezoid rule integrates `e^{ikΔd}` exactly for all
    /// `|Δ| ≤ 2L`, which turns the quadrature identities into machine-exact
    /// statements.
    pub fn default_grid(&self, sites: usize) -> MomentumGrid {
        match self.model {
            EnvelopeModel::IdealBandlimited => {
                let intervals = (4 * sites).max(64);
                MomentumGrid::uniform(PI / self.lattice_const, intervals + 1)
            }
            EnvelopeModel::Gaussian { sigma } => {
                let k_max = 5.0 / sigma;
                let dk_phase = PI / ((2 * sites + 4) as f64 * self.lattice_const);
                let dk_env = 0.2 / sigma;
                let dk = dk_phase.min(dk_env);
                let intervals = ((2.0 * k_max / dk).ceil() as usize).max(16);
                let intervals = intervals + intervals % 2;
                MomentumGrid::uniform(k_max, intervals + 1)
            }
        }
    }
}

/// Uniform symmetric momentum grid on `[-k_max, k_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    k_max: f64,
    n_points: usize,
}

impl MomentumGrid {
    pub fn uniform(k_max: f64, n_points: usize) -> Self {
        assert!(n_points >= 3, "momentum grid needs at least 3 points");
        Self { k_max, n_points }
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dk(&self) -> f64 {
        2.0 * self.k_max / (self.n_points as f64 - 1.0)
    }

    pub fn k_at(&self, i: usize) -> f64 {
        -self.k_max + i as f64 * self.dk()
    }

    pub fn samples(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.k_at(i)).collect()
    }

    /// Trapezoid weight of point `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_points - 1 {
            0.5 * self.dk()
        } else {
            self.dk()
        }
    }

    pub fn trapezoid_real(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| self.weight(i) * v)
            .sum()
    }

    /// Checks the grid invariants against an envelope: the grid must cover
    /// the support above `1e-10` of the peak and integrate `|ŵ_0|²` to one
    /// within `1e-6`.
    pub fn validate(&self, envelope: &WannierEnvelope) -> Result<()> {
        let needed = envelope.support_kmax();
        if self.k_max < needed - 1e-9 {
            return Err(Error::GridTooCoarse(format!(
                "grid reaches |k| = {:.6}, envelope support needs {:.6}",
                self.k_max, needed
            )));
        }
        let values: Vec<f64> = (0..self.n_points)
            .map(|i| envelope.abs2(self.k_at(i)))
            .collect();
        let norm = self.trapezoid_real(&values);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::GridTooCoarse(format!(
                "trapezoid normalization of |w0|^2 is {norm:.9}, needs 1 within 1e-6"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ideal_envelope_is_flat_and_normalized() {
        let env = WannierEnvelope::ideal(1.0);
        let grid = env.default_grid(4);
        grid.validate(&env).unwrap();
        assert_relative_eq!(env.abs2(0.0), 1.0 / (2.0 * PI), epsilon = 1e-15);
        assert_relative_eq!(env.abs2(3.0), 1.0 / (2.0 * PI), epsilon = 1e-15);
        assert_relative_eq!(env.abs2(3.2), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_envelope_normalized_on_default_grid() {
        let env = WannierEnvelope::default_gaussian(1.5);
        let grid = env.default_grid(6);
        grid.validate(&env).unwrap();
        let vals: Vec<f64> = grid.samples().iter().map(|&k| env.abs2(k)).collect();
        assert_relative_eq!(grid.trapezoid_real(&vals), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_overlap_formula() {
        let env = WannierEnvelope::gaussian(1.0, 0.2);
        assert_relative_eq!(env.displaced_overlap(0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            env.displaced_overlap(1),
            (-1.0f64 / (4.0 * 0.04)).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn too_small_grid_rejected() {
        let env = WannierEnvelope::ideal(1.0);
        let grid = MomentumGrid::uniform(1.0, 33);
        assert!(matches!(
            grid.validate(&env),
            Err(Error::GridTooCoarse(_))
        ));
    }
}
