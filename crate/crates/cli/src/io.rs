//! File formats of the pipeline: the state file, record loading, and the
//! default output directory resolution.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use tofwit::builders::DefectBudget;
use tofwit::envelope::WannierEnvelope;
use tofwit::fock::{FockState, LatticeGeometry, ManyBodyState, Statistics};
use tofwit::tof::MeasurementRecord;
use tofwit::C64;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "TOFWIT_OUTDIR";

/// Resolves an output path: absolute paths pass through, relative ones land
/// in `--output-dir`, `$TOFWIT_OUTDIR`, or the working directory.
pub fn resolve_output(path: &str, dir_flag: Option<&str>) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    let base = dir_flag
        .map(PathBuf::from)
        .or_else(|| std::env::var(OUTPUT_DIR_ENV).ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    base.join(p)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateFile {
    pub format: String,
    pub statistics: Statistics,
    pub sites: usize,
    pub lattice_const: f64,
    pub max_occ: u8,
    pub truncated: bool,
    pub defects: Option<DefectBudget>,
    /// Sorted by occupation vector for deterministic output.
    pub amplitudes: Vec<AmplitudeEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AmplitudeEntry {
    pub occ: Vec<u8>,
    pub re: f64,
    pub im: f64,
}

pub fn state_to_file(state: &ManyBodyState, defects: Option<DefectBudget>) -> StateFile {
    let geom = state.geometry();
    let mut amplitudes: Vec<AmplitudeEntry> = state
        .amplitudes()
        .iter()
        .map(|(k, v)| AmplitudeEntry {
            occ: k.occ_modes().to_vec(),
            re: v.re,
            im: v.im,
        })
        .collect();
    amplitudes.sort_by(|a, b| a.occ.cmp(&b.occ));
    StateFile {
        format: "tofwit-state-v1".into(),
        statistics: state.statistics(),
        sites: geom.sites(),
        lattice_const: geom.lattice_const(),
        max_occ: geom.max_occ(),
        truncated: state.truncated(),
        defects,
        amplitudes,
    }
}

pub fn state_from_file(file: &StateFile) -> anyhow::Result<ManyBodyState> {
    if file.format != "tofwit-state-v1" {
        anyhow::bail!("unsupported state format `{}`", file.format);
    }
    let geom = LatticeGeometry::new(file.sites, file.lattice_const, file.max_occ)?;
    let components: Vec<(FockState, C64)> = file
        .amplitudes
        .iter()
        .map(|e| {
            (
                FockState::from_occupations(e.occ.clone()),
                Complex64::new(e.re, e.im),
            )
        })
        .collect();
    let mut state = ManyBodyState::from_components(geom, file.statistics, components)?;
    if file.truncated {
        state.mark_truncated();
    }
    Ok(state)
}

pub fn write_state(path: &Path, state: &ManyBodyState, defects: Option<DefectBudget>) -> anyhow::Result<()> {
    let file = state_to_file(state, defects);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn read_state(path: &Path) -> anyhow::Result<(ManyBodyState, StateFile)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read state file {}: {e}", path.display()))?;
    let file: StateFile = serde_json::from_str(&text)?;
    let state = state_from_file(&file)?;
    Ok((state, file))
}

/// Loads a record from JSON (self-describing) or CSV (metadata supplied by
/// the caller).
pub fn read_record(
    path: &Path,
    csv_metadata: Option<(usize, Statistics, WannierEnvelope)>,
) -> anyhow::Result<MeasurementRecord> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read record {}: {e}", path.display()))?;
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        let (sites, statistics, envelope) = csv_metadata.ok_or_else(|| {
            anyhow::anyhow!(
                "CSV records carry no lattice metadata; pass --sites, --statistics, \
                 --lattice-const and envelope flags"
            )
        })?;
        Ok(MeasurementRecord::from_csv(&text, sites, statistics, envelope)?)
    } else {
        Ok(MeasurementRecord::from_json(&text)?)
    }
}
