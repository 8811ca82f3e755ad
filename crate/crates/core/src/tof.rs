//! Time-of-flight observables.
//!
//! In the long-flight-time limit the expanded cloud density maps onto the
//! initial momentum distribution, so everything here is computed directly in
//! momentum space:
//!
//! * `n_x(k)   = Σ_{n,m}  ŵ_n(k) ŵ_m(k)* ⟨x_n† x_m⟩`
//! * `c_xy(k,k') = Σ ŵ_n(k) ŵ_m(k)* ŵ_{n'}(k') ŵ_{m'}(k')* ⟨x_n† x_m y_{n'}† y_{m'}⟩`
//!
//! and the Fourier-transform witnesses are available along two independent
//! paths: quadrature over a [`MeasurementRecord`] and direct operator sums.
//! On the ring, a site difference `x` and `x − L` label the same hop, so the
//! quadrature path sums both phase images; with the ideal envelope and the
//! default grid the two paths then agree to machine precision.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::{MomentumGrid, WannierEnvelope};
use crate::error::{Error, Result};
use crate::fock::{LadderKind, Level, Rho, Statistics};
use crate::C64;

/// Measurement channels of one time-of-flight data set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Na,
    Nb,
    Caa,
    Cab,
    Cba,
    Cbb,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Na => "na",
            Channel::Nb => "nb",
            Channel::Caa => "caa",
            Channel::Cab => "cab",
            Channel::Cba => "cba",
            Channel::Cbb => "cbb",
        }
    }

    pub fn correlation_levels(self) -> Option<(Level, Level)> {
        match self {
            Channel::Caa => Some((Level::A, Level::A)),
            Channel::Cab => Some((Level::A, Level::B)),
            Channel::Cba => Some((Level::B, Level::A)),
            Channel::Cbb => Some((Level::B, Level::B)),
            _ => None,
        }
    }

    pub fn from_levels(levels: (Level, Level)) -> Self {
        match levels {
            (Level::A, Level::A) => Channel::Caa,
            (Level::A, Level::B) => Channel::Cab,
            (Level::B, Level::A) => Channel::Cba,
            (Level::B, Level::B) => Channel::Cbb,
        }
    }
}

/// Ring hops reachable at offset `x`: on `L` sites the integer site
/// differences `x mod L` and `x mod L − L` label the same periodic hop, so
/// quadrature extractions sum both phase images.
pub fn ring_images(x: i64, sites: usize) -> Vec<i64> {
    let l = sites as i64;
    let x0 = x.rem_euclid(l);
    if x0 == 0 {
        vec![0]
    } else {
        vec![x0, x0 - l]
    }
}

fn reject_sector_mixing(rho: &Rho<'_>) -> Result<()> {
    if rho.is_sector_mixing() {
        Err(Error::SectorMixing)
    } else {
        Ok(())
    }
}

/// Ring-summed two-point function `Σ_m ⟨x_m† x_{m+x}⟩` (the operator-sum side
/// of the occupation witness).
pub fn q_occupation_direct(rho: Rho<'_>, x: i64, level: Level) -> Result<C64> {
    reject_sector_mixing(&rho)?;
    let geom = *rho.geometry();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..geom.sites() {
        acc += rho.expectation(&[
            (LadderKind::Create, m, level),
            (LadderKind::Annihilate, geom.wrap(m, x), level),
        ])?;
    }
    Ok(acc)
}

/// Ring-summed internal-level witness
/// `Σ_{m,m'} ⟨x_m† x_{m+x} y_{m'+x}† y_{m'}⟩`; with `restricted` only the
/// `m = m'` terms are kept.
pub fn q_internal_direct(
    rho: Rho<'_>,
    x: i64,
    levels: (Level, Level),
    restricted: bool,
) -> Result<C64> {
    reject_sector_mixing(&rho)?;
    let geom = *rho.geometry();
    let (lx, ly) = levels;
    let l = geom.sites();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..l {
        let primes: Vec<usize> = if restricted { vec![m] } else { (0..l).collect() };
        for mp in primes {
            acc += rho.expectation(&[
                (LadderKind::Create, m, lx),
                (LadderKind::Annihilate, geom.wrap(m, x), lx),
                (LadderKind::Create, geom.wrap(mp, x), ly),
                (LadderKind::Annihilate, mp, ly),
            ])?;
        }
    }
    Ok(acc)
}

/// Two-point table over unwrapped site differences:
/// `G(Δ) = Σ_n ⟨x_n† x_{n+Δ}⟩` with `0 ≤ n, n+Δ < L`.
fn g_table(rho: Rho<'_>, level: Level) -> Result<Vec<C64>> {
    let l = rho.geometry().sites();
    let mut table = vec![Complex64::new(0.0, 0.0); 2 * l - 1];
    for delta in -(l as i64 - 1)..=(l as i64 - 1) {
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..l {
            let m = n as i64 + delta;
            if m < 0 || m >= l as i64 {
                continue;
            }
            acc += rho.expectation(&[
                (LadderKind::Create, n, level),
                (LadderKind::Annihilate, m as usize, level),
            ])?;
        }
        table[(delta + l as i64 - 1) as usize] = acc;
    }
    Ok(table)
}

/// Four-point table `H(Δ1, Δ2) = Σ_{n,n'} ⟨x_n† x_{n+Δ1} y_{n'}† y_{n'+Δ2}⟩`
/// over unwrapped differences.
fn h_table(rho: Rho<'_>, levels: (Level, Level)) -> Result<Vec<Vec<C64>>> {
    let l = rho.geometry().sites();
    let (lx, ly) = levels;
    let deltas: Vec<i64> = (-(l as i64 - 1)..=(l as i64 - 1)).collect();
    deltas
        .par_iter()
        .map(|&d1| {
            let mut row = vec![Complex64::new(0.0, 0.0); 2 * l - 1];
            for (j, &d2) in deltas.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..l {
                    let m = n as i64 + d1;
                    if m < 0 || m >= l as i64 {
                        continue;
                    }
                    for np in 0..l {
                        let mp = np as i64 + d2;
                        if mp < 0 || mp >= l as i64 {
                            continue;
                        }
                        acc += rho.expectation(&[
                            (LadderKind::Create, n, lx),
                            (LadderKind::Annihilate, m as usize, lx),
                            (LadderKind::Create, np, ly),
                            (LadderKind::Annihilate, mp as usize, ly),
                        ])?;
                    }
                }
                row[j] = acc;
            }
            Ok(row)
        })
        .collect()
}

/// Momentum distribution `n(k)` of one level on the grid.
pub fn momentum_density(
    rho: Rho<'_>,
    level: Level,
    envelope: &WannierEnvelope,
    grid: &MomentumGrid,
) -> Result<Vec<f64>> {
    grid.validate(envelope)?;
    let geom = *rho.geometry();
    let d = envelope.lattice_const;
    let l = geom.sites();
    let table = g_table(rho, level)?;
    let mut out = Vec::with_capacity(grid.n_points());
    for i in 0..grid.n_points() {
        let k = grid.k_at(i);
        let mut acc = Complex64::new(0.0, 0.0);
        for delta in -(l as i64 - 1)..=(l as i64 - 1) {
            let g = table[(delta + l as i64 - 1) as usize];
            acc += g * Complex64::from_polar(1.0, k * delta as f64 * d);
        }
        let value = acc * envelope.abs2(k);
        if value.im.abs() > 1e-10 * (1.0 + value.re.abs()) {
            return Err(Error::NonHermitian(value.im.abs()));
        }
        out.push(value.re);
    }
    Ok(out)
}

/// Density-density correlation `c_xy(k, k')` on the grid; Hermitian as a
/// kernel under `(k ↔ k', xy ↔ yx)` conjugation.
pub fn momentum_correlation(
    rho: Rho<'_>,
    levels: (Level, Level),
    envelope: &WannierEnvelope,
    grid: &MomentumGrid,
) -> Result<Vec<Vec<C64>>> {
    grid.validate(envelope)?;
    let geom = *rho.geometry();
    let d = envelope.lattice_const;
    let l = geom.sites();
    let table = h_table(rho, levels)?;
    let n = grid.n_points();
    let phases: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            let k = grid.k_at(i);
            (-(l as i64 - 1)..=(l as i64 - 1))
                .map(|delta| Complex64::from_polar(1.0, k * delta as f64 * d))
                .collect()
        })
        .collect();
    let rows: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let wi = envelope.abs2(grid.k_at(i));
            (0..n)
                .map(|j| {
                    let wj = envelope.abs2(grid.k_at(j));
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (a, row) in table.iter().enumerate() {
                        let pa = phases[i][a];
                        for (b, h) in row.iter().enumerate() {
                            acc += h * pa * phases[j][b];
                        }
                    }
                    acc * wi * wj
                })
                .collect()
        })
        .collect();
    Ok(rows)
}

/// How a record came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Simulated,
    Sampled,
    Ingested,
}

/// Complex matrix in a serde-friendly layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl CMatrix {
    pub fn from_complex(m: &[Vec<C64>]) -> Self {
        Self {
            re: m.iter().map(|r| r.iter().map(|c| c.re).collect()).collect(),
            im: m.iter().map(|r| r.iter().map(|c| c.im).collect()).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            re: vec![vec![0.0; n]; n],
            im: vec![vec![0.0; n]; n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        Complex64::new(self.re[i][j], self.im[i][j])
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.re[i][j] = v.re;
        self.im[i][j] = v.im;
    }

    pub fn n(&self) -> usize {
        self.re.len()
    }
}

/// One time-of-flight data set: momentum densities for both levels and the
/// four density-density correlation channels, together with the grid and
/// envelope metadata needed to evaluate witnesses from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub sites: usize,
    pub lattice_const: f64,
    pub statistics: Statistics,
    pub envelope: WannierEnvelope,
    pub grid: MomentumGrid,
    pub provenance: Provenance,
    pub shots: Option<u64>,
    pub n_a: Vec<f64>,
    pub n_b: Vec<f64>,
    pub c_aa: CMatrix,
    pub c_ab: CMatrix,
    pub c_ba: CMatrix,
    pub c_bb: CMatrix,
}

impl MeasurementRecord {
    pub fn correlation(&self, channel: Channel) -> Result<&CMatrix> {
        match channel {
            Channel::Caa => Ok(&self.c_aa),
            Channel::Cab => Ok(&self.c_ab),
            Channel::Cba => Ok(&self.c_ba),
            Channel::Cbb => Ok(&self.c_bb),
            _ => Err(Error::InvalidRecord(format!(
                "{} is not a correlation channel",
                channel.label()
            ))),
        }
    }

    pub fn density(&self, level: Level) -> &[f64] {
        match level {
            Level::A => &self.n_a,
            Level::B => &self.n_b,
        }
    }

    /// Grid/envelope invariants plus array-shape consistency.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate(&self.envelope)?;
        let n = self.grid.n_points();
        if self.n_a.len() != n || self.n_b.len() != n {
            return Err(Error::InvalidRecord(format!(
                "density arrays have {} and {} samples, grid has {}",
                self.n_a.len(),
                self.n_b.len(),
                n
            )));
        }
        for (name, m) in [
            ("caa", &self.c_aa),
            ("cab", &self.c_ab),
            ("cba", &self.c_ba),
            ("cbb", &self.c_bb),
        ] {
            if m.re.len() != n
                || m.im.len() != n
                || m.re.iter().any(|r| r.len() != n)
                || m.im.iter().any(|r| r.len() != n)
            {
                return Err(Error::InvalidRecord(format!(
                    "correlation {name} does not match the {n}-point grid"
                )));
            }
        }
        if self
            .n_a
            .iter()
            .chain(self.n_b.iter())
            .any(|&v| v < -1e-9 || !v.is_finite())
        {
            return Err(Error::InvalidRecord(
                "densities must be finite and nonnegative within 1e-9".into(),
            ));
        }
        for i in 0..n {
            if self.c_aa.im[i][i].abs() > 1e-9 || self.c_bb.im[i][i].abs() > 1e-9 {
                return Err(Error::InvalidRecord(
                    "same-level correlations must be real on the diagonal".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Simulates the full time-of-flight measurement of a state.
pub fn measure(
    rho: Rho<'_>,
    envelope: &WannierEnvelope,
    grid: &MomentumGrid,
) -> Result<MeasurementRecord> {
    grid.validate(envelope)?;
    let n_a = momentum_density(rho, Level::A, envelope, grid)?;
    let n_b = momentum_density(rho, Level::B, envelope, grid)?;
    let mut channels = Vec::new();
    for levels in [
        (Level::A, Level::A),
        (Level::A, Level::B),
        (Level::B, Level::A),
        (Level::B, Level::B),
    ] {
        channels.push(CMatrix::from_complex(&momentum_correlation(
            rho, levels, envelope, grid,
        )?));
    }
    let mut it = channels.into_iter();
    Ok(MeasurementRecord {
        sites: rho.geometry().sites(),
        lattice_const: envelope.lattice_const,
        statistics: rho.statistics(),
        envelope: *envelope,
        grid: grid.clone(),
        provenance: Provenance::Simulated,
        shots: None,
        n_a,
        n_b,
        c_aa: it.next().unwrap(),
        c_ab: it.next().unwrap(),
        c_ba: it.next().unwrap(),
        c_bb: it.next().unwrap(),
    })
}

/// Occupation witness from the record:
/// `⟨Q_x⟩ = ∫ dk e^{-ikxd} n_a(k)`, summed over the ring phase images of `x`.
pub fn q_occupation_integral(record: &MeasurementRecord, x: i64) -> Result<C64> {
    record.validate()?;
    let grid = &record.grid;
    let d = record.lattice_const;
    let mut acc = Complex64::new(0.0, 0.0);
    for s in ring_images(x, record.sites) {
        for i in 0..grid.n_points() {
            let k = grid.k_at(i);
            acc += Complex64::from_polar(grid.weight(i) * record.n_a[i], -k * s as f64 * d);
        }
    }
    Ok(acc)
}

/// Internal-level witness from the record:
/// `⟨Q_x^{xy}⟩ = ∬ dk dk' e^{-ikxd} e^{+ik'xd} c_xy(k,k')`, with both
/// integrals summed over the ring phase images of `x`.
pub fn q_internal_integral(
    record: &MeasurementRecord,
    x: i64,
    levels: (Level, Level),
) -> Result<C64> {
    record.validate()?;
    let grid = &record.grid;
    let d = record.lattice_const;
    let c = record.correlation(Channel::from_levels(levels))?;
    let n = grid.n_points();
    let images = ring_images(x, record.sites);
    // Contract the k and k' phases separately: Σ_i w_i e^{∓iksd} c(k_i, ·).
    let mut acc = Complex64::new(0.0, 0.0);
    for &s in &images {
        for &sp in &images {
            let pk: Vec<C64> = (0..n)
                .map(|i| Complex64::from_polar(grid.weight(i), -grid.k_at(i) * s as f64 * d))
                .collect();
            let pkp: Vec<C64> = (0..n)
                .map(|j| Complex64::from_polar(grid.weight(j), grid.k_at(j) * sp as f64 * d))
                .collect();
            for i in 0..n {
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    row += c.get(i, j) * pkp[j];
                }
                acc += pk[i] * row;
            }
        }
    }
    Ok(acc)
}

/// Finite-statistics emulation: Poisson-resampled densities and
/// Gaussian-resampled correlations whose spread follows the same
/// `1/√shots` model the consistency tests use. Seed-fixed runs are
/// bit-reproducible.
pub fn sample_shots(record: &MeasurementRecord, shots: u64, seed: u64) -> Result<MeasurementRecord> {
    if shots == 0 {
        return Err(Error::InvalidRecord("shot count must be positive".into()));
    }
    record.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dk = record.grid.dk();
    let mut out = record.clone();
    out.provenance = Provenance::Sampled;
    out.shots = Some(shots);
    let scale = shots as f64 * dk;
    for dens in [&mut out.n_a, &mut out.n_b] {
        for v in dens.iter_mut() {
            let lambda = (*v).max(0.0) * scale;
            *v = if lambda > 0.0 {
                let p = Poisson::new(lambda).expect("positive lambda");
                p.sample(&mut rng) / scale
            } else {
                0.0
            };
        }
    }
    let n = record.grid.n_points();
    let channels = [
        (Channel::Caa, Level::A, Level::A),
        (Channel::Cab, Level::A, Level::B),
        (Channel::Cba, Level::B, Level::A),
        (Channel::Cbb, Level::B, Level::B),
    ];
    for (ch, lx, ly) in channels {
        let clean = record.correlation(ch)?.clone();
        let target = match ch {
            Channel::Caa => &mut out.c_aa,
            Channel::Cab => &mut out.c_ab,
            Channel::Cba => &mut out.c_ba,
            Channel::Cbb => &mut out.c_bb,
            _ => unreachable!(),
        };
        for i in 0..n {
            for j in 0..n {
                let v = clean.get(i, j);
                let base = record.density(lx)[i].max(0.0) * record.density(ly)[j].max(0.0);
                let sigma = ((base + v.norm()) / shots as f64).sqrt();
                let zr: f64 = rng.sample(StandardNormal);
                let re = v.re + sigma * zr;
                let im = if v.im.abs() > 0.0 {
                    let zi: f64 = rng.sample(StandardNormal);
                    v.im + sigma * zi
                } else {
                    0.0
                };
                target.set(i, j, Complex64::new(re, im));
            }
        }
        // Keep the diagonal of same-level channels exactly real.
        if matches!(ch, Channel::Caa | Channel::Cbb) {
            for i in 0..n {
                let v = target.get(i, i);
                target.set(i, i, Complex64::new(v.re, 0.0));
            }
        }
    }
    Ok(out)
}

fn fmt_value(v: C64) -> String {
    if v.im == 0.0 {
        format!("{:.17e}", v.re)
    } else if v.im < 0.0 {
        format!("{:.17e}-{:.17e}i", v.re, -v.im)
    } else {
        format!("{:.17e}+{:.17e}i", v.re, v.im)
    }
}

fn parse_value(s: &str) -> Result<C64> {
    let t = s.trim();
    if let Ok(re) = t.parse::<f64>() {
        return Ok(Complex64::new(re, 0.0));
    }
    let inner = t
        .strip_suffix('i')
        .ok_or_else(|| Error::InvalidRecord(format!("cannot parse value `{s}`")))?;
    // Split at the sign of the imaginary part, skipping exponent signs.
    let bytes = inner.as_bytes();
    for pos in (1..bytes.len()).rev() {
        let c = bytes[pos] as char;
        if (c == '+' || c == '-') && !matches!(bytes[pos - 1] as char, 'e' | 'E') {
            let re: f64 = inner[..pos]
                .parse()
                .map_err(|_| Error::InvalidRecord(format!("cannot parse value `{s}`")))?;
            let im: f64 = inner[pos..]
                .parse()
                .map_err(|_| Error::InvalidRecord(format!("cannot parse value `{s}`")))?;
            return Ok(Complex64::new(re, im));
        }
    }
    Err(Error::InvalidRecord(format!("cannot parse value `{s}`")))
}

impl MeasurementRecord {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidRecord(format!("JSON encoding failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: MeasurementRecord = serde_json::from_str(text)
            .map_err(|e| Error::InvalidRecord(format!("JSON decoding failed: {e}")))?;
        rec.validate()?;
        Ok(rec)
    }

    /// CSV rows `channel,k,kprime,value`; densities leave `kprime` empty.
    /// Floats are written with enough digits to round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,k,kprime,value\n");
        let ks = self.grid.samples();
        for (level, name) in [(Level::A, "na"), (Level::B, "nb")] {
            for (i, &k) in ks.iter().enumerate() {
                out.push_str(&format!(
                    "{name},{k:.17e},,{}\n",
                    fmt_value(Complex64::new(self.density(level)[i], 0.0))
                ));
            }
        }
        for ch in [Channel::Caa, Channel::Cab, Channel::Cba, Channel::Cbb] {
            let m = self.correlation(ch).unwrap();
            for (i, &k) in ks.iter().enumerate() {
                for (j, &kp) in ks.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{k:.17e},{kp:.17e},{}\n",
                        ch.label(),
                        fmt_value(m.get(i, j))
                    ));
                }
            }
        }
        out
    }

    /// Ingests the CSV schema written by [`MeasurementRecord::to_csv`]; the grid is
    /// reconstructed from the `k` column and must be uniform. Metadata not
    /// stored in the CSV (lattice, envelope, statistics) is supplied by the
    /// caller.
    pub fn from_csv(
        text: &str,
        sites: usize,
        statistics: Statistics,
        envelope: WannierEnvelope,
    ) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidRecord("empty CSV".into()))?;
        if header.trim() != "channel,k,kprime,value" {
            return Err(Error::InvalidRecord(format!(
                "unexpected CSV header `{header}`"
            )));
        }
        let mut rows: Vec<(Channel, f64, Option<f64>, C64)> = Vec::new();
        let mut k_values: Vec<f64> = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.splitn(4, ',').collect();
            if parts.len() != 4 {
                return Err(Error::InvalidRecord(format!("malformed CSV row `{line}`")));
            }
            let channel = match parts[0] {
                "na" => Channel::Na,
                "nb" => Channel::Nb,
                "caa" => Channel::Caa,
                "cab" => Channel::Cab,
                "cba" => Channel::Cba,
                "cbb" => Channel::Cbb,
                other => {
                    return Err(Error::InvalidRecord(format!("unknown channel `{other}`")))
                }
            };
            let k: f64 = parts[1]
                .parse()
                .map_err(|_| Error::InvalidRecord(format!("bad k in `{line}`")))?;
            let kp: Option<f64> = if parts[2].trim().is_empty() {
                None
            } else {
                Some(
                    parts[2]
                        .parse()
                        .map_err(|_| Error::InvalidRecord(format!("bad kprime in `{line}`")))?,
                )
            };
            let value = parse_value(parts[3])?;
            if channel == Channel::Na {
                k_values.push(k);
            }
            rows.push((channel, k, kp, value));
        }
        if k_values.len() < 3 {
            return Err(Error::InvalidRecord("too few density samples".into()));
        }
        let n = k_values.len();
        let k_min = k_values[0];
        let k_max = *k_values.last().unwrap();
        if (k_min + k_max).abs() > 1e-9 * k_max.abs().max(1.0) {
            return Err(Error::InvalidRecord("grid is not symmetric".into()));
        }
        let dk = (k_max - k_min) / (n as f64 - 1.0);
        for (i, &k) in k_values.iter().enumerate() {
            if (k - (k_min + i as f64 * dk)).abs() > 1e-9 * dk {
                return Err(Error::InvalidRecord("grid is not uniform".into()));
            }
        }
        let grid = MomentumGrid::uniform(k_max, n);
        let index_of = |k: f64| -> Result<usize> {
            let idx = ((k - k_min) / dk).round() as i64;
            if idx < 0 || idx >= n as i64 || (k - (k_min + idx as f64 * dk)).abs() > 1e-9 * dk {
                Err(Error::InvalidRecord(format!("k value {k} off the grid")))
            } else {
                Ok(idx as usize)
            }
        };
        let mut record = MeasurementRecord {
            sites,
            lattice_const: envelope.lattice_const,
            statistics,
            envelope,
            grid,
            provenance: Provenance::Ingested,
            shots: None,
            n_a: vec![0.0; n],
            n_b: vec![0.0; n],
            c_aa: CMatrix::zeros(n),
            c_ab: CMatrix::zeros(n),
            c_ba: CMatrix::zeros(n),
            c_bb: CMatrix::zeros(n),
        };
        for (channel, k, kp, value) in rows {
            let i = index_of(k)?;
            match channel {
                Channel::Na => record.n_a[i] = value.re,
                Channel::Nb => record.n_b[i] = value.re,
                ch => {
                    let j = index_of(kp.ok_or_else(|| {
                        Error::InvalidRecord(format!("{} row missing kprime", ch.label()))
                    })?)?;
                    match ch {
                        Channel::Caa => record.c_aa.set(i, j, value),
                        Channel::Cab => record.c_ab.set(i, j, value),
                        Channel::Cba => record.c_ba.set(i, j, value),
                        Channel::Cbb => record.c_bb.set(i, j, value),
                        _ => unreachable!(),
                    }
                }
            }
        }
        record.validate()?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{build_bell_chain, build_delocalized_atoms, build_mott, BellLabel};
    use crate::fock::{LatticeGeometry, ManyBodyState};
    use approx::assert_relative_eq;

    fn geom(l: usize, cap: u8) -> LatticeGeometry {
        LatticeGeometry::new(l, 1.0, cap).unwrap()
    }

    fn ideal(g: &LatticeGeometry) -> (WannierEnvelope, MomentumGrid) {
        let env = WannierEnvelope::ideal(g.lattice_const());
        let grid = env.default_grid(g.sites());
        (env, grid)
    }

    #[test]
    fn mott_density_is_flat() {
        let g = geom(4, 1);
        let s = build_mott(g, Statistics::Boson, 1, Level::A).unwrap();
        let (env, grid) = ideal(&g);
        let n = momentum_density(Rho::Pure(&s), Level::A, &env, &grid).unwrap();
        for (i, &v) in n.iter().enumerate() {
            assert_relative_eq!(v, 4.0 * env.abs2(grid.k_at(i)), epsilon = 1e-10);
        }
    }

    #[test]
    fn delocalized_atom_density_closed_form() {
        // n(k) = |w0|^2 (1 + cos kd) for (|10⟩ + |01⟩)/√2.
        let g = geom(2, 1);
        let s = build_delocalized_atoms(g, Statistics::Boson, 1).unwrap();
        let (env, grid) = ideal(&g);
        let n = momentum_density(Rho::Pure(&s), Level::A, &env, &grid).unwrap();
        for (i, &v) in n.iter().enumerate() {
            let k = grid.k_at(i);
            assert_relative_eq!(v, env.abs2(k) * (1.0 + k.cos()), epsilon = 1e-10);
        }
    }

    #[test]
    fn vacuum_measures_zero() {
        let g = geom(2, 1);
        let s = ManyBodyState::vacuum(g, Statistics::Boson);
        let (env, grid) = ideal(&g);
        let rec = measure(Rho::Pure(&s), &env, &grid).unwrap();
        assert!(rec.n_a.iter().all(|&v| v.abs() < 1e-14));
        assert!(rec.n_b.iter().all(|&v| v.abs() < 1e-14));
        assert_relative_eq!(
            q_internal_integral(&rec, 1, (Level::A, Level::B))
                .unwrap()
                .norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn single_level_state_has_no_ab_correlation() {
        let g = geom(2, 2);
        let s = build_delocalized_atoms(g, Statistics::Boson, 2).unwrap();
        let (env, grid) = ideal(&g);
        let c = momentum_correlation(Rho::Pure(&s), (Level::A, Level::B), &env, &grid).unwrap();
        assert!(c.iter().flatten().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn q_occupation_examples() {
        let g = geom(4, 1);
        let mott = build_mott(g, Statistics::Boson, 1, Level::A).unwrap();
        let (env, grid) = ideal(&g);
        let rec = measure(Rho::Pure(&mott), &env, &grid).unwrap();
        assert!(q_occupation_integral(&rec, 1).unwrap().norm() < 1e-8);
        assert_relative_eq!(q_occupation_integral(&rec, 0).unwrap().re, 4.0, epsilon = 1e-8);

        let g2 = geom(2, 1);
        let deloc = build_delocalized_atoms(g2, Statistics::Boson, 1).unwrap();
        let (env2, grid2) = ideal(&g2);
        let rec2 = measure(Rho::Pure(&deloc), &env2, &grid2).unwrap();
        let from_record = q_occupation_integral(&rec2, 1).unwrap();
        let direct = q_occupation_direct(Rho::Pure(&deloc), 1, Level::A).unwrap();
        assert_relative_eq!(direct.re, 1.0, epsilon = 1e-12);
        assert!((from_record - direct).norm() < 1e-6);
    }

    #[test]
    fn singlet_internal_witnesses() {
        let g = geom(2, 1);
        let s = build_bell_chain(g, Statistics::Boson, BellLabel::PhiMinus, 1).unwrap();
        let q_ab = q_internal_direct(Rho::Pure(&s), 1, (Level::A, Level::B), true).unwrap();
        let q_aa = q_internal_direct(Rho::Pure(&s), 1, (Level::A, Level::A), true).unwrap();
        assert_relative_eq!(q_ab.re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(q_aa.re, 1.0, epsilon = 1e-12);

        let (env, grid) = ideal(&g);
        let rec = measure(Rho::Pure(&s), &env, &grid).unwrap();
        let q_ab_int = q_internal_integral(&rec, 1, (Level::A, Level::B)).unwrap();
        let q_aa_int = q_internal_integral(&rec, 1, (Level::A, Level::A)).unwrap();
        // The unrestricted sums coincide with the restricted ones here: one
        // atom per site kills every m ≠ m' term.
        assert!((q_ab_int - q_ab).norm() < 1e-6);
        assert!((q_aa_int - q_aa).norm() < 1e-6);
    }

    #[test]
    fn one_atom_per_site_restricted_equals_unrestricted() {
        let g = geom(4, 1);
        let s = build_bell_chain(g, Statistics::Boson, BellLabel::PhiPlus, 1).unwrap();
        for levels in [(Level::A, Level::B), (Level::A, Level::A)] {
            let r = q_internal_direct(Rho::Pure(&s), 1, levels, true).unwrap();
            let u = q_internal_direct(Rho::Pure(&s), 1, levels, false).unwrap();
            assert!((r - u).norm() < 1e-12);
        }
    }

    #[test]
    fn hermiticity_in_x() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let g = geom(5, 2);
        let s = crate::builders::random_sector_state(g, Statistics::Boson, 3, 8, &mut rng).unwrap();
        for x in 1..5 {
            let q = q_occupation_direct(Rho::Pure(&s), x, Level::A).unwrap();
            let qm = q_occupation_direct(Rho::Pure(&s), -x, Level::A).unwrap();
            assert!((q.conj() - qm).norm() < 1e-12);
        }
    }

    #[test]
    fn separable_states_are_flat() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let g = geom(4, 2);
        let rho = crate::builders::random_diagonal_density(g, Statistics::Boson, 2, 6, &mut rng)
            .unwrap();
        let (env, grid) = ideal(&g);
        let n = momentum_density(Rho::Matrix(&rho), Level::A, &env, &grid).unwrap();
        let flat: Vec<f64> = n
            .iter()
            .enumerate()
            .map(|(i, &v)| v / env.abs2(grid.k_at(i)))
            .collect();
        for &v in &flat {
            assert_relative_eq!(v, flat[0], epsilon = 1e-9);
        }
        for x in 1..4 {
            let q = q_occupation_direct(Rho::Matrix(&rho), x, Level::A).unwrap();
            assert!(q.norm() < 1e-10);
        }
    }

    #[test]
    fn gaussian_envelope_error_shrinks_with_sigma() {
        let g = geom(3, 1);
        let s = build_delocalized_atoms(g, Statistics::Boson, 1).unwrap();
        let exact = q_occupation_direct(Rho::Pure(&s), 1, Level::A).unwrap();
        let mut errors = Vec::new();
        for sigma in [0.3, 0.2, 0.1] {
            let env = WannierEnvelope::gaussian(1.0, sigma);
            let grid = env.default_grid(3);
            let rec = measure(Rho::Pure(&s), &env, &grid).unwrap();
            let q = q_occupation_integral(&rec, 1).unwrap();
            errors.push((q - exact).norm());
        }
        assert!(errors[0] > errors[1] && errors[1] > errors[2]);
    }

    #[test]
    fn sampling_is_reproducible_and_consistent() {
        let g = geom(2, 1);
        let s = build_mott(g, Statistics::Boson, 1, Level::A).unwrap();
        let (env, grid) = ideal(&g);
        let rec = measure(Rho::Pure(&s), &env, &grid).unwrap();
        let s1 = sample_shots(&rec, 10_000, 42).unwrap();
        let s2 = sample_shots(&rec, 10_000, 42).unwrap();
        assert_eq!(s1.to_csv(), s2.to_csv());

        // Law of large numbers at the sampler's own 1/√shots scale: the mean
        // density error shrinks with the shot count.
        let coarse = sample_shots(&rec, 100, 7).unwrap();
        let fine = sample_shots(&rec, 1_000_000, 7).unwrap();
        let err = |r: &MeasurementRecord| -> f64 {
            r.n_a
                .iter()
                .zip(rec.n_a.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / r.n_a.len() as f64
        };
        assert!(err(&fine) < err(&coarse));
    }

    #[test]
    fn chi_square_flatness_on_sampled_mott() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let g = geom(4, 1);
        let s = build_mott(g, Statistics::Boson, 1, Level::A).unwrap();
        let (env, grid) = ideal(&g);
        let rec = measure(Rho::Pure(&s), &env, &grid).unwrap();
        let shots = 10_000u64;
        let sampled = sample_shots(&rec, shots, 2024).unwrap();
        let scale = shots as f64 * grid.dk();
        let mut chi2 = 0.0;
        for i in 0..grid.n_points() {
            let expected = rec.n_a[i];
            let var = expected / scale;
            chi2 += (sampled.n_a[i] - expected).powi(2) / var;
        }
        let dof = grid.n_points() as f64;
        let threshold = ChiSquared::new(dof).unwrap().inverse_cdf(0.999);
        assert!(chi2 < threshold, "chi2 {chi2} over threshold {threshold}");
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let g = geom(2, 1);
        let s = build_bell_chain(g, Statistics::Boson, BellLabel::PhiMinus, 1).unwrap();
        let (env, grid) = ideal(&g);
        let rec = measure(Rho::Pure(&s), &env, &grid).unwrap();
        let csv = rec.to_csv();
        let back =
            MeasurementRecord::from_csv(&csv, rec.sites, rec.statistics, rec.envelope).unwrap();
        assert_eq!(rec.n_a, back.n_a);
        assert_eq!(rec.c_ab, back.c_ab);
        assert_eq!(rec.c_aa, back.c_aa);
        let json = rec.to_json().unwrap();
        let back2 = MeasurementRecord::from_json(&json).unwrap();
        assert_eq!(rec.n_a, back2.n_a);
        assert_eq!(rec.c_bb, back2.c_bb);
    }

    #[test]
    fn sector_mixing_rejected_for_witnesses() {
        let g = geom(2, 1);
        let mix = ManyBodyState::from_components(
            g,
            Statistics::Boson,
            [
                (
                    crate::fock::FockState::from_occupations(vec![1, 0, 0, 0]),
                    C64::new(0.8, 0.0),
                ),
                (
                    crate::fock::FockState::from_occupations(vec![1, 1, 0, 0]),
                    C64::new(0.6, 0.0),
                ),
            ],
        )
        .unwrap();
        assert!(matches!(
            q_occupation_direct(Rho::Pure(&mix), 1, Level::A),
            Err(Error::SectorMixing)
        ));
    }
}
