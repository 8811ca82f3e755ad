//! Command-line pipeline driver: build states, simulate or ingest
//! time-of-flight measurements, evaluate witnesses and entanglement bounds,
//! run the exact oracles, and emit reports.
//!
//! Exit codes: 0 on success, 2 for validation errors, 3 for
//! numerical-tolerance failures.

mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tofwit::builders::{
    build_bell_chain, build_delocalized_atoms, build_mott, inject_defects, DefectBudget,
};
use tofwit::envelope::MomentumGrid;
use tofwit::fock::{Rho, Statistics};
use tofwit::reduced::{delocalized_rho_ab, internal_qubit_block, pair_block_dense};
use tofwit::report::{
    assemble_report, measure_witnesses, render_table, report_from_record, BoundRegime,
    WitnessReport,
};
use tofwit::tof::{measure, sample_shots};
use tofwit::Error as CoreError;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "tofwit",
    about = "Detect and quantify delocalized entanglement of lattice atoms from momentum-space correlations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a named state (optionally with injected defects) and write it
    /// to a state file.
    Build(BuildArgs),
    /// Simulate the time-of-flight measurement of a state into CSV + JSON
    /// records.
    Measure(MeasureArgs),
    /// Evaluate witnesses and entanglement bounds from a state or a record.
    Bound(BoundArgs),
    /// Exact oracle analysis of the delocalized two-site state.
    Oracle(OracleArgs),
    /// Build a dephasing schedule and compare single-time, averaged, and
    /// restricted internal witnesses.
    Dephase(DephaseArgs),
    /// Bound sweep over every offset x = 1 .. L-1.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonConfig {
    /// TOML configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long)]
    lattice_const: Option<f64>,
    #[arg(long)]
    max_occ: Option<u8>,
    /// boson | fermion
    #[arg(long)]
    statistics: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for relative paths (or $TOFWIT_OUTDIR).
    #[arg(long)]
    output_dir: Option<String>,
}

impl CommonConfig {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.sites {
            cfg.geometry.sites = s;
        }
        if let Some(d) = self.lattice_const {
            cfg.geometry.lattice_const = d;
        }
        if let Some(m) = self.max_occ {
            cfg.geometry.max_occ = m;
        }
        if let Some(stats) = &self.statistics {
            cfg.statistics = parse_statistics(stats)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = Some(dir.clone());
        }
        Ok(cfg)
    }
}

fn parse_statistics(text: &str) -> anyhow::Result<Statistics> {
    match text.to_ascii_lowercase().as_str() {
        "boson" | "bosonic" => Ok(Statistics::Boson),
        "fermion" | "fermionic" => Ok(Statistics::Fermion),
        other => anyhow::bail!("unknown statistics `{other}` (expected boson or fermion)"),
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// mott | delocalized | bell-chain
    #[arg(long)]
    builder: Option<String>,
    #[arg(long)]
    filling: Option<u8>,
    /// a | b
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    atoms: Option<u32>,
    /// phi+ | phi- | psi+ | psi-
    #[arg(long)]
    bell: Option<String>,
    #[arg(long)]
    pair_offset: Option<usize>,
    /// Defect rate ε.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Occupation bound r of the defect budget.
    #[arg(long)]
    r: Option<u8>,
    #[arg(long, default_value = "state.json")]
    out: String,
    /// Also write the merged effective configuration (TOML) for
    /// reproducibility.
    #[arg(long)]
    emit_config: Option<String>,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(long)]
    state: PathBuf,
    /// ideal | gaussian
    #[arg(long)]
    envelope: Option<String>,
    /// Gaussian width in units of the lattice constant.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    k_max: Option<f64>,
    #[arg(long)]
    n_points: Option<usize>,
    /// Finite-statistics resampling; 0 keeps the exact record.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, default_value = "record")]
    out_prefix: String,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(long, conflicts_with = "record")]
    state: Option<PathBuf>,
    #[arg(long)]
    record: Option<PathBuf>,
    /// Comma-separated offsets, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    x: Vec<i64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    r: Option<u8>,
    /// Force the general-filling formulas even for one-atom states.
    #[arg(long)]
    general: bool,
    /// ideal | gaussian — needed when ingesting a CSV record.
    #[arg(long)]
    envelope: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 1)]
    x: i64,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    r: Option<u8>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct DephaseArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 1)]
    x: i64,
    /// Use M random times instead of the exact-nulling grid.
    #[arg(long)]
    random_times: Option<usize>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    r: Option<u8>,
    #[arg(long)]
    out: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// 2 for validation problems, 3 for numerical-tolerance failures.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        match core {
            CoreError::GridTooCoarse(_)
            | CoreError::NonHermitian(_)
            | CoreError::NotPositive(_)
            | CoreError::CrossSectorCoherence(_)
            | CoreError::DegenerateSchedule(_) => 3,
            _ => 2,
        }
    } else {
        2
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Measure(args) => cmd_measure(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Dephase(args) => cmd_dephase(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn build_state(cfg: &RunConfig) -> anyhow::Result<(tofwit::ManyBodyState, Option<DefectBudget>)> {
    let geom = cfg.geometry.build()?;
    let state = match cfg.builder.name.as_str() {
        "mott" => build_mott(geom, cfg.statistics, cfg.builder.filling, cfg.builder.level()?)?,
        "delocalized" => build_delocalized_atoms(geom, cfg.statistics, cfg.builder.atoms)?,
        "bell-chain" => build_bell_chain(
            geom,
            cfg.statistics,
            cfg.builder.bell()?,
            cfg.builder.pair_offset,
        )?,
        "random-sector" => tofwit::builders::random_sector_state_seeded(
            geom,
            cfg.statistics,
            cfg.builder.atoms,
            cfg.builder.components,
            cfg.seed,
        )?,
        "random-internal" => {
            tofwit::builders::random_internal_state_seeded(geom, cfg.statistics, cfg.seed)?
        }
        other => anyhow::bail!(
            "unknown builder `{other}` (expected mott, delocalized, bell-chain, \
             random-sector, or random-internal)"
        ),
    };
    if cfg.defects.epsilon > 0.0 {
        let budget = DefectBudget::new(cfg.defects.epsilon, cfg.defects.r)?;
        let (state, spent) = inject_defects(&state, budget, cfg.seed)?;
        Ok((state, Some(spent)))
    } else {
        Ok((state, None))
    }
}

fn cmd_build(args: BuildArgs) -> anyhow::Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(b) = &args.builder {
        cfg.builder.name = b.clone();
    }
    if let Some(f) = args.filling {
        cfg.builder.filling = f;
    }
    if let Some(level) = &args.level {
        cfg.builder.level = level.clone();
    }
    if let Some(n) = args.atoms {
        cfg.builder.atoms = n;
    }
    if let Some(bell) = &args.bell {
        cfg.builder.bell = bell.clone();
    }
    if let Some(p) = args.pair_offset {
        cfg.builder.pair_offset = p;
    }
    if let Some(e) = args.epsilon {
        cfg.defects.epsilon = e;
    }
    if let Some(r) = args.r {
        cfg.defects.r = r;
    }
    let (state, defects) = build_state(&cfg)?;
    let out = io::resolve_output(&args.out, cfg.output_dir.as_deref());
    io::write_state(&out, &state, defects)?;
    if let Some(cfg_out) = &args.emit_config {
        let path = io::resolve_output(cfg_out, cfg.output_dir.as_deref());
        std::fs::write(&path, cfg.to_toml()?)?;
        println!("effective configuration written to {}", path.display());
    }
    let atoms = Rho::Pure(&state).total_number();
    println!(
        "built `{}` on {} sites: N = {atoms}, components = {}, truncated = {}{}",
        cfg.builder.name,
        cfg.geometry.sites,
        state.amplitudes().len(),
        state.truncated(),
        defects
            .map(|d| format!(", defects realized = {}", d.realized_defects))
            .unwrap_or_default()
    );
    println!("state written to {}", out.display());
    Ok(())
}

fn grid_from_args(
    cfg: &RunConfig,
    envelope: &tofwit::envelope::WannierEnvelope,
    sites: usize,
    k_max: Option<f64>,
    n_points: Option<usize>,
) -> MomentumGrid {
    match (&cfg.grid, k_max, n_points) {
        (_, Some(k), Some(n)) => MomentumGrid::uniform(k, n),
        (Some(g), _, _) => MomentumGrid::uniform(g.k_max, g.n_points),
        _ => envelope.default_grid(sites),
    }
}

fn cmd_measure(args: MeasureArgs) -> anyhow::Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(model) = &args.envelope {
        cfg.envelope.model = model.clone();
    }
    if let Some(s) = args.sigma {
        cfg.envelope.sigma_over_d = s;
    }
    if let Some(shots) = args.shots {
        cfg.shots = shots;
    }
    let (state, _) = io::read_state(&args.state)?;
    let geom = state.geometry();
    let envelope = cfg.envelope.build(geom.lattice_const())?;
    let grid = grid_from_args(&cfg, &envelope, geom.sites(), args.k_max, args.n_points);
    let mut record = measure(Rho::Pure(&state), &envelope, &grid)?;
    if cfg.shots > 0 {
        record = sample_shots(&record, cfg.shots, cfg.seed)?;
    }
    let json_path = io::resolve_output(
        &format!("{}.json", args.out_prefix),
        cfg.output_dir.as_deref(),
    );
    let csv_path = io::resolve_output(
        &format!("{}.csv", args.out_prefix),
        cfg.output_dir.as_deref(),
    );
    std::fs::write(&json_path, record.to_json()?)?;
    std::fs::write(&csv_path, record.to_csv())?;
    println!(
        "measured {} grid points ({:?}); records written to {} and {}",
        record.grid.n_points(),
        record.provenance,
        json_path.display(),
        csv_path.display()
    );
    Ok(())
}

fn budget_from(args_eps: Option<f64>, args_r: Option<u8>, cfg: &RunConfig) -> anyhow::Result<DefectBudget> {
    let epsilon = args_eps.unwrap_or(cfg.defects.epsilon);
    let r = args_r.unwrap_or(cfg.defects.r);
    if epsilon == 0.0 {
        Ok(DefectBudget::none())
    } else {
        Ok(DefectBudget::new(epsilon, r)?)
    }
}

fn write_reports(
    reports: &[WitnessReport],
    out: Option<&str>,
    output_dir: Option<&str>,
) -> anyhow::Result<()> {
    print!("{}", render_table(reports));
    if let Some(out) = out {
        let path = io::resolve_output(out, output_dir);
        std::fs::write(&path, serde_json::to_string_pretty(reports)?)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> anyhow::Result<()> {
    let cfg = args.common.load()?;
    let budget = budget_from(args.epsilon, args.r, &cfg)?;
    let mut reports = Vec::new();
    match (&args.state, &args.record) {
        (Some(state_path), None) => {
            let (state, _) = io::read_state(state_path)?;
            let one_atom =
                tofwit::builders::is_one_atom_per_site(&state) && budget.epsilon == 0.0;
            let regime = if one_atom && !args.general {
                BoundRegime::OneAtomPerSite
            } else {
                BoundRegime::GeneralDefect
            };
            for &x in &args.x {
                let witnesses = measure_witnesses(Rho::Pure(&state), x, true)?;
                reports.push(assemble_report(
                    &witnesses,
                    state.statistics(),
                    &budget,
                    regime,
                )?);
            }
        }
        (None, Some(record_path)) => {
            let csv_meta = if record_path
                .extension()
                .map(|e| e.eq_ignore_ascii_case("csv"))
                .unwrap_or(false)
            {
                let envelope = {
                    let mut env_cfg = cfg.envelope.clone();
                    if let Some(model) = &args.envelope {
                        env_cfg.model = model.clone();
                    }
                    if let Some(s) = args.sigma {
                        env_cfg.sigma_over_d = s;
                    }
                    env_cfg.build(cfg.geometry.lattice_const)?
                };
                Some((cfg.geometry.sites, cfg.statistics, envelope))
            } else {
                None
            };
            let record = io::read_record(record_path, csv_meta)?;
            let regime = if args.general {
                BoundRegime::GeneralDefect
            } else {
                BoundRegime::OneAtomPerSite
            };
            for &x in &args.x {
                reports.push(report_from_record(&record, x, &budget, regime)?);
            }
        }
        _ => anyhow::bail!("pass exactly one of --state or --record"),
    }
    write_reports(&reports, args.out.as_deref(), cfg.output_dir.as_deref())?;
    Ok(())
}

#[derive(Serialize)]
struct OracleOutput {
    x: i64,
    statistics: Statistics,
    atom_number: f64,
    trace: f64,
    nonvacuum_trace: f64,
    sectors: Vec<SectorSummary>,
    block_basis: Vec<String>,
    block_re: Vec<Vec<f64>>,
    block_im: Vec<Vec<f64>>,
    ssr_eof: f64,
    ssr_exact: bool,
    wootters_eof: Option<f64>,
    wootters_concurrence: Option<f64>,
    bound_eof_occupation: f64,
    bound_eof_internal: f64,
    bound_lambda_plus: f64,
    bound_lambda_minus: f64,
    sound: bool,
}

#[derive(Serialize)]
struct SectorSummary {
    atoms: u32,
    trace: f64,
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<()> {
    let cfg = args.common.load()?;
    let budget = budget_from(args.epsilon, args.r, &cfg)?;
    let (state, _) = io::read_state(&args.state)?;
    let geom = state.geometry();
    if geom.sites() > 10 || geom.max_occ() > 3 {
        anyhow::bail!(
            "oracle analysis is capped at 10 sites and occupation 3 \
             (got {} sites, cap {})",
            geom.sites(),
            geom.max_occ()
        );
    }
    let rab = delocalized_rho_ab(Rho::Pure(&state), args.x)?;
    let sectors = rab.sector_decompose()?;
    let ssr = tofwit::bounds::ssr_eof(&rab)?;
    let one_atom = tofwit::builders::is_one_atom_per_site(&state);
    let (wootters_value, concurrence_value) = if one_atom {
        let projected = rab.project_nonzero()?;
        let (block, _) = internal_qubit_block(&projected);
        (
            Some(tofwit::bounds::wootters_eof(&block)?),
            Some(tofwit::bounds::wootters_concurrence(&block)?),
        )
    } else {
        (None, None)
    };
    let regime = if one_atom && budget.epsilon == 0.0 {
        BoundRegime::OneAtomPerSite
    } else {
        BoundRegime::GeneralDefect
    };
    let witnesses = measure_witnesses(Rho::Pure(&state), args.x, true)?;
    let report = assemble_report(&witnesses, state.statistics(), &budget, regime)?;
    let oracle_for_internal = wootters_value.unwrap_or(ssr.value);
    let sound = report.eof_occupation <= ssr.value + 1e-9
        && report.eof_internal <= oracle_for_internal + 1e-9
        && concurrence_value
            .map(|c| report.lambda_plus <= c + 1e-9 && report.lambda_minus <= c + 1e-9)
            .unwrap_or(true);
    let (basis, dense) = pair_block_dense(rab.block());
    let n = basis.len();
    let output = OracleOutput {
        x: args.x,
        statistics: state.statistics(),
        atom_number: witnesses.atom_number,
        trace: rab.trace(),
        nonvacuum_trace: rab.nonvacuum_trace(),
        sectors: sectors
            .iter()
            .map(|s| SectorSummary {
                atoms: s.atoms,
                trace: s.trace,
            })
            .collect(),
        block_basis: basis.iter().map(|b| b.label(rab.block().geometry())).collect(),
        block_re: (0..n)
            .map(|i| (0..n).map(|j| dense[(i, j)].re).collect())
            .collect(),
        block_im: (0..n)
            .map(|i| (0..n).map(|j| dense[(i, j)].im).collect())
            .collect(),
        ssr_eof: ssr.value,
        ssr_exact: ssr.exact,
        wootters_eof: wootters_value,
        wootters_concurrence: concurrence_value,
        bound_eof_occupation: report.eof_occupation,
        bound_eof_internal: report.eof_internal,
        bound_lambda_plus: report.lambda_plus,
        bound_lambda_minus: report.lambda_minus,
        sound,
    };
    println!(
        "x = {}: trace {:.6}, non-vacuum {:.6}, sectors {:?}",
        args.x,
        output.trace,
        output.nonvacuum_trace,
        output
            .sectors
            .iter()
            .map(|s| (s.atoms, s.trace))
            .collect::<Vec<_>>()
    );
    println!(
        "oracle: sector EoF = {:.6} (exact: {}), Wootters EoF = {}",
        output.ssr_eof,
        output.ssr_exact,
        output
            .wootters_eof
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "n/a".into())
    );
    println!(
        "bounds: occupation {:.6}, internal {:.6} — {}",
        output.bound_eof_occupation,
        output.bound_eof_internal,
        if output.sound { "SOUND" } else { "VIOLATION" }
    );
    if let Some(out) = args.out.as_deref() {
        let path = io::resolve_output(out, cfg.output_dir.as_deref());
        std::fs::write(&path, serde_json::to_string_pretty(&output)?)?;
        println!("oracle analysis written to {}", path.display());
    }
    if !output.sound {
        return Err(anyhow::Error::new(CoreError::NotPositive(
            output.bound_eof_occupation - output.ssr_eof,
        ))
        .context("a bound exceeded its oracle"));
    }
    Ok(())
}

#[derive(Serialize)]
struct DephaseOutput {
    x: i64,
    schedule_times: Vec<f64>,
    kernel_bound: f64,
    q_ab_single_time: [f64; 2],
    q_ab_restricted: [f64; 2],
    q_ab_averaged: [f64; 2],
}

fn cmd_dephase(args: DephaseArgs) -> anyhow::Result<()> {
    let cfg = args.common.load()?;
    let (state, _) = io::read_state(&args.state)?;
    let sites = state.geometry().sites();
    let schedule = match args.random_times {
        Some(m) => tofwit::dephasing::make_random_schedule(sites, args.x, m, cfg.seed)?,
        None => tofwit::dephasing::make_schedule(sites, args.x)?,
    };
    let levels = (tofwit::Level::A, tofwit::Level::B);
    let single = tofwit::tof::q_internal_direct(Rho::Pure(&state), args.x, levels, false)?;
    let restricted = tofwit::tof::q_internal_direct(Rho::Pure(&state), args.x, levels, true)?;
    let averaged = tofwit::dephasing::dephased_q_internal(&state, args.x, levels, &schedule)?;
    println!(
        "schedule: {} times, kernel bound {:.3e}",
        schedule.len(),
        schedule.kernel_bound
    );
    println!(
        "Q_ab single-time  = {:+.9} {:+.9}i\nQ_ab restricted   = {:+.9} {:+.9}i\nQ_ab averaged     = {:+.9} {:+.9}i",
        single.re, single.im, restricted.re, restricted.im, averaged.re, averaged.im
    );
    println!(
        "|averaged - restricted| = {:.3e}",
        (averaged - restricted).norm()
    );
    if let Some(out) = args.out.as_deref() {
        let path = io::resolve_output(out, cfg.output_dir.as_deref());
        let output = DephaseOutput {
            x: args.x,
            schedule_times: schedule.times.clone(),
            kernel_bound: schedule.kernel_bound,
            q_ab_single_time: [single.re, single.im],
            q_ab_restricted: [restricted.re, restricted.im],
            q_ab_averaged: [averaged.re, averaged.im],
        };
        std::fs::write(&path, serde_json::to_string_pretty(&output)?)?;
        println!("schedule written to {}", path.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let cfg = args.common.load()?;
    let budget = budget_from(args.epsilon, args.r, &cfg)?;
    let (state, _) = io::read_state(&args.state)?;
    let sites = state.geometry().sites();
    let one_atom = tofwit::builders::is_one_atom_per_site(&state) && budget.epsilon == 0.0;
    let regime = if one_atom {
        BoundRegime::OneAtomPerSite
    } else {
        BoundRegime::GeneralDefect
    };
    let mut reports = Vec::new();
    for x in 1..sites as i64 {
        let witnesses = measure_witnesses(Rho::Pure(&state), x, true)?;
        reports.push(assemble_report(
            &witnesses,
            state.statistics(),
            &budget,
            regime,
        )?);
    }
    write_reports(&reports, args.out.as_deref(), cfg.output_dir.as_deref())?;
    Ok(())
}
