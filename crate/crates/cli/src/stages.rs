//! The five pipeline stages. Each stage reads the artifacts of the previous
//! ones from the output tree and writes its own:
//!
//! ```text
//! <out>/run.cfg
//! <out>/fom/        snapshots_{p,q,m}.alrm, sample_times.csv, invariants.csv, dissipation.csv
//! <out>/reduce/     spectrum.csv, models.csv
//! <out>/models/<l>/ operators (*.alrm), deim_basis.alrm, interpolator.alrm, model.cfg
//! <out>/rom/<l>/    reduced_states.alrm, lifted_{p,q}.alrm, invariants.csv, balance.csv
//! <out>/compare/    table.csv
//! <out>/figures/    profiles.csv, spacetime.csv, traces.csv
//! ```
//!
//! `<l>` is the [`ModeSpec::label`] of a reduced model, e.g. `r21_d21`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use alrom::integrators::{integrate, Stepper, TimeGrid};
use alrom::lattice::{initial_soliton_conservative, initial_soliton_damped, State};
use alrom::metrics::{
    balance_residuals, conservation_error, conservation_error_against, decay_ratios, max_relative_drift,
    relative_solution_error, scaled_balance_error, scaled_identity_residuals, DiagnosticKind, DiagnosticSeries,
};
use alrom::reduction::{deim_operator, fom_snapshots, pod_basis, qdeim_points, truncation_rank, SnapshotKind, SnapshotSet, Truncation};
use alrom::rom::{lift, project_initial, reduced_system, Variant};
use alrom::{ReducedModel, Trajectory};
use nalgebra::{DMatrix, DVector};

use crate::config::{parse_modes, InitialProfile, ModeSpec, RunConfig};
use crate::csv_out::{self, real};
use crate::error::{CliError, CliResult};
use crate::{matrix_file, persist};

/// Paths of the output tree.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn fom(&self) -> PathBuf {
        self.root.join("fom")
    }

    pub fn reduce(&self) -> PathBuf {
        self.root.join("reduce")
    }

    pub fn model(&self, spec: &ModeSpec) -> PathBuf {
        self.root.join("models").join(spec.label())
    }

    pub fn rom(&self, spec: &ModeSpec) -> PathBuf {
        self.root.join("rom").join(spec.label())
    }

    pub fn compare(&self) -> PathBuf {
        self.root.join("compare")
    }

    pub fn figures(&self) -> PathBuf {
        self.root.join("figures")
    }
}

fn ensure_dir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

fn steps_of(cfg: &RunConfig) -> TimeGrid<f64> {
    TimeGrid { t0: 0.0, dt: cfg.lattice.dt, steps: cfg.steps() }
}

pub fn initial_state(cfg: &RunConfig) -> CliResult<State<f64>> {
    Ok(match cfg.initial {
        InitialProfile::Conservative { eta, xi } => initial_soliton_conservative(&cfg.lattice, eta, xi)?,
        InitialProfile::Damped { phase } => initial_soliton_damped(&cfg.lattice, phase),
    })
}

fn stepper(cfg: &RunConfig) -> Stepper<f64> {
    Stepper::for_damping(cfg.lattice.mu)
}

/// Integrates the full-order lattice without touching the file system.
pub fn fom_trajectory(cfg: &RunConfig) -> CliResult<Trajectory> {
    let system = alrom::FullOrderModel::new(cfg.lattice);
    let z0 = initial_state(cfg)?.to_vector();
    Ok(integrate(&system, &z0, stepper(cfg), steps_of(cfg), cfg.snapshot_stride, &cfg.solver)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FomReport {
    pub steps: usize,
    pub samples: usize,
    pub hamiltonian0: f64,
    pub momentum0: f64,
    pub hamiltonian_max_drift: f64,
    pub momentum_max_drift: f64,
    /// Largest relative residual of the per-step scaled-invariant identity (H, I).
    pub identity_max: Option<(f64, f64)>,
    /// Largest `|Q^{k+1}/Q^k - exp(-2 mu dt)|` (H, I).
    pub ratio_max_deviation: Option<(f64, f64)>,
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn write_matrix_columns(path: &Path, cols: &[DVector<f64>], rows: usize) -> CliResult<()> {
    let mut m = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    matrix_file::write(path, &m)
}

fn invariant_rows(traj: &Trajectory) -> Vec<Vec<String>> {
    traj.step_times()
        .iter()
        .enumerate()
        .map(|(k, t)| vec![k.to_string(), real(*t), real(traj.hamiltonian[k]), real(traj.momentum[k])])
        .collect()
}

const INVARIANT_HEADER: [&str; 4] = ["step", "time[-]", "hamiltonian[-]", "momentum[-]"];

pub fn write_run_config(cfg: &RunConfig, layout: &Layout) -> CliResult<()> {
    ensure_dir(&layout.root)?;
    let p = layout.root.join("run.cfg");
    // The tree is relocatable, so its own location is not recorded.
    let text: String = cfg.to_text().lines().filter(|l| !l.starts_with("output.dir ")).map(|l| format!("{l}\n")).collect();
    fs::write(&p, text).map_err(|e| CliError::io(&p, e))
}

pub fn run_fom(cfg: &RunConfig, layout: &Layout) -> CliResult<FomReport> {
    let traj = fom_trajectory(cfg)?;
    let dir = layout.fom();
    ensure_dir(&dir)?;
    let (sp, sq, sm) = fom_snapshots(&traj, &cfg.lattice)?;
    matrix_file::write(&dir.join("snapshots_p.alrm"), &sp.data)?;
    matrix_file::write(&dir.join("snapshots_q.alrm"), &sq.data)?;
    matrix_file::write(&dir.join("snapshots_m.alrm"), &sm.data)?;
    csv_out::write(
        &dir.join("sample_times.csv"),
        &["sample", "step", "time[-]"],
        traj.sample_steps.iter().enumerate().map(|(j, &k)| vec![j.to_string(), k.to_string(), real(traj.grid.time(k))]),
    )?;
    csv_out::write(&dir.join("invariants.csv"), &INVARIANT_HEADER, invariant_rows(&traj))?;

    let mut report = FomReport {
        steps: traj.steps(),
        samples: traj.samples.len(),
        hamiltonian0: traj.hamiltonian[0],
        momentum0: traj.momentum[0],
        hamiltonian_max_drift: max_relative_drift(&traj.hamiltonian)?,
        momentum_max_drift: max_relative_drift(&traj.momentum)?,
        identity_max: None,
        ratio_max_deviation: None,
    };
    if cfg.is_damped() {
        let (mu, dt) = (cfg.lattice.mu, cfg.lattice.dt);
        let rate = (-2.0 * mu * dt).exp();
        let id_h = scaled_identity_residuals(&traj.hamiltonian, mu, dt);
        let id_i = scaled_identity_residuals(&traj.momentum, mu, dt);
        let r_h = decay_ratios(&traj.hamiltonian);
        let r_i = decay_ratios(&traj.momentum);
        let times = traj.step_times();
        let bal = |values: &[f64], kind| -> CliResult<Vec<f64>> {
            let s = DiagnosticSeries::new(times.clone(), values.to_vec(), kind)?;
            Ok(balance_residuals(&s, mu, dt, &cfg.rates)?.residuals.values)
        };
        let b_h = bal(&traj.hamiltonian, DiagnosticKind::Hamiltonian)?;
        let b_i = bal(&traj.momentum, DiagnosticKind::Momentum)?;
        csv_out::write(
            &dir.join("dissipation.csv"),
            &[
                "step",
                "time[-]",
                "identity_residual_H[-]",
                "identity_residual_I[-]",
                "decay_ratio_H[-]",
                "decay_ratio_I[-]",
                "balance_residual_H[-]",
                "balance_residual_I[-]",
            ],
            (0..id_h.len()).map(|k| {
                vec![
                    k.to_string(),
                    real(times[k]),
                    real(id_h[k]),
                    real(id_i[k]),
                    real(r_h[k]),
                    real(r_i[k]),
                    real(b_h[k]),
                    real(b_i[k]),
                ]
            }),
        )?;
        report.identity_max = Some((max_of(id_h), max_of(id_i)));
        report.ratio_max_deviation = Some((
            max_of(r_h.iter().map(|r| (r - rate).abs())),
            max_of(r_i.iter().map(|r| (r - rate).abs())),
        ));
    }
    Ok(report)
}

/// FOM artifacts as read back from disk.
#[derive(Debug, Clone)]
pub struct FomArtifacts {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub sample_steps: Vec<usize>,
    pub sample_times: Vec<f64>,
    pub hamiltonian: Vec<f64>,
    pub momentum: Vec<f64>,
    pub step_times: Vec<f64>,
}

pub fn load_fom(layout: &Layout) -> CliResult<FomArtifacts> {
    let dir = layout.fom();
    let p = matrix_file::read(&dir.join("snapshots_p.alrm"))?;
    let q = matrix_file::read(&dir.join("snapshots_q.alrm"))?;
    let m = matrix_file::read(&dir.join("snapshots_m.alrm"))?;
    let tpath = dir.join("sample_times.csv");
    let times = csv_out::read(&tpath)?;
    let sample_steps = times.reals("step", &tpath)?.into_iter().map(|s| s as usize).collect::<Vec<_>>();
    let sample_times = times.reals("time[-]", &tpath)?;
    let ipath = dir.join("invariants.csv");
    let inv = csv_out::read(&ipath)?;
    let art = FomArtifacts {
        p,
        q,
        m,
        sample_steps,
        sample_times,
        hamiltonian: inv.reals("hamiltonian[-]", &ipath)?,
        momentum: inv.reals("momentum[-]", &ipath)?,
        step_times: inv.reals("time[-]", &ipath)?,
    };
    let k = art.sample_times.len();
    if art.p.ncols() != k || art.q.ncols() != k || art.m.ncols() != k || art.p.shape() != art.q.shape() {
        return Err(CliError::corrupt(&dir, "snapshot matrices disagree with sample_times.csv"));
    }
    Ok(art)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub spec: ModeSpec,
    pub captured_p: f64,
    pub captured_q: f64,
    pub captured_m: f64,
    pub condition_number: f64,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReduceReport {
    pub snapshot_columns: usize,
    /// Ranks selected by the configured tolerances: (p, q, m).
    pub kappa_ranks: (usize, usize, usize),
    pub models: Vec<ModelReport>,
}

/// Mode specs a stage should act on: explicit ones, else those recorded by
/// `reduce`.
fn specs_from_models_csv(layout: &Layout) -> CliResult<Vec<ModeSpec>> {
    let path = layout.reduce().join("models.csv");
    let t = csv_out::read(&path)?;
    let n_r = t.reals("n_r", &path)?;
    let n_d = t.reals("n_d", &path)?;
    Ok(n_r.iter().zip(&n_d).map(|(&r, &d)| ModeSpec { n_r: r as usize, n_d: d as usize }).collect())
}

pub fn run_reduce(cfg: &RunConfig, layout: &Layout, modes: Option<&[ModeSpec]>) -> CliResult<ReduceReport> {
    let fom = load_fom(layout)?;
    if fom.p.nrows() != cfg.lattice.n_sites {
        return Err(CliError::Config(format!(
            "snapshots have {} sites, config has {}",
            fom.p.nrows(),
            cfg.lattice.n_sites
        )));
    }
    let set = |data: &DMatrix<f64>, kind| SnapshotSet::new(data.clone(), fom.sample_times.clone(), kind);
    let sp = set(&fom.p, SnapshotKind::P)?;
    let sq = set(&fom.q, SnapshotKind::Q)?;
    let sm = set(&fom.m, SnapshotKind::Nonlinearity)?;
    let max_rank = sp.n_rows().min(sp.n_samples());

    // One SVD per snapshot set; every model slices its leading columns.
    let full = |s: &SnapshotSet<f64>| pod_basis(s, Truncation::Fixed(max_rank));
    let (bp, bq, bm) = (full(&sp)?, full(&sq)?, full(&sm)?);
    let kappa_ranks = (
        truncation_rank(&bp.singular_values, cfg.pod.kappa_state),
        truncation_rank(&bq.singular_values, cfg.pod.kappa_state),
        truncation_rank(&bm.singular_values, cfg.pod.kappa_nonlin),
    );
    let specs: Vec<ModeSpec> = match modes {
        Some(m) => m.to_vec(),
        None => vec![ModeSpec {
            n_r: cfg.pod.modes.unwrap_or(kappa_ranks.0.max(kappa_ranks.1)),
            n_d: cfg.pod.deim_modes.unwrap_or(kappa_ranks.2),
        }],
    };
    for s in &specs {
        if s.n_r > max_rank || s.n_d > max_rank {
            return Err(CliError::Config(format!("{}: mode counts exceed the snapshot rank bound {max_rank}", s.label())));
        }
    }

    let dir = layout.reduce();
    ensure_dir(&dir)?;
    let norm = |b: &alrom::PodBasis, j: usize| b.singular_values[j] / b.singular_values[0];
    csv_out::write(
        &dir.join("spectrum.csv"),
        &["index", "sigma_p[-]", "sigma_q[-]", "sigma_m[-]", "sigma_p_normalized[-]", "sigma_q_normalized[-]", "sigma_m_normalized[-]"],
        (0..bp.singular_values.len()).map(|j| {
            vec![
                (j + 1).to_string(),
                real(bp.singular_values[j]),
                real(bq.singular_values[j]),
                real(bm.singular_values[j]),
                real(norm(&bp, j)),
                real(norm(&bq, j)),
                real(norm(&bm, j)),
            ]
        }),
    )?;

    let mut models = Vec::new();
    for spec in &specs {
        let v_p = bp.modes.columns(0, spec.n_r).into_owned();
        let v_q = bq.modes.columns(0, spec.n_r).into_owned();
        let phi = bm.modes.columns(0, spec.n_d).into_owned();
        let points = qdeim_points(&phi)?;
        let op = deim_operator(&phi, &points)?;
        let model = ReducedModel::assemble(&cfg.lattice, v_p, v_q, Some(&op), cfg.assembly_block)?;
        let report = ModelReport {
            spec: *spec,
            captured_p: bp.energy_ratio(spec.n_r),
            captured_q: bq.energy_ratio(spec.n_r),
            captured_m: bm.energy_ratio(spec.n_d),
            condition_number: op.condition_number(),
            points,
        };
        let mdir = layout.model(spec);
        let mut extras = BTreeMap::new();
        extras.insert("label".to_string(), spec.label());
        extras.insert("captured_energy_p".to_string(), real(report.captured_p));
        extras.insert("captured_energy_q".to_string(), real(report.captured_q));
        extras.insert("captured_energy_m".to_string(), real(report.captured_m));
        extras.insert("condition_number".to_string(), real(report.condition_number));
        persist::save_model(&mdir, &model, &extras)?;
        matrix_file::write(&mdir.join("deim_basis.alrm"), &op.basis)?;
        matrix_file::write(&mdir.join("interpolator.alrm"), &op.interpolator)?;
        models.push(report);
    }
    csv_out::write(
        &dir.join("models.csv"),
        &["label", "n_r", "n_d", "captured_energy_p[-]", "captured_energy_q[-]", "captured_energy_m[-]", "condition_number[-]"],
        models.iter().map(|m| {
            vec![
                m.spec.label(),
                m.spec.n_r.to_string(),
                m.spec.n_d.to_string(),
                real(m.captured_p),
                real(m.captured_q),
                real(m.captured_m),
                real(m.condition_number),
            ]
        }),
    )?;
    Ok(ReduceReport { snapshot_columns: sp.n_samples(), kappa_ranks, models })
}

/// Integrates a reduced model from the projected initial state.
pub fn rom_trajectory(cfg: &RunConfig, model: &ReducedModel, variant: Variant) -> CliResult<Trajectory> {
    let sys = reduced_system(model, variant)?;
    let z0 = project_initial(&model.v_p, &model.v_q, &initial_state(cfg)?)?;
    Ok(integrate(&sys, &z0.to_vector(), stepper(cfg), steps_of(cfg), cfg.snapshot_stride, &cfg.solver)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomReport {
    pub spec: ModeSpec,
    pub variant: Variant,
    pub hamiltonian_max_drift: f64,
    pub momentum_max_drift: f64,
}

fn model_matches(cfg: &RunConfig, model: &ReducedModel, dir: &Path) -> CliResult<()> {
    let l = &cfg.lattice;
    if model.n_sites() != l.n_sites || model.mesh != l.mesh || model.gamma != l.gamma || model.mu != l.mu {
        return Err(CliError::Config(format!("{}: model was assembled for a different lattice", dir.display())));
    }
    Ok(())
}

pub fn run_rom(cfg: &RunConfig, layout: &Layout, modes: Option<&[ModeSpec]>) -> CliResult<Vec<RomReport>> {
    let specs = match modes {
        Some(m) => m.to_vec(),
        None => specs_from_models_csv(layout)?,
    };
    let mut out = Vec::new();
    for spec in &specs {
        let mdir = layout.model(spec);
        let model = persist::load_model(&mdir)?;
        model_matches(cfg, &model, &mdir)?;
        let traj = rom_trajectory(cfg, &model, cfg.variant)?;
        let dir = layout.rom(spec);
        ensure_dir(&dir)?;
        write_matrix_columns(&dir.join("reduced_states.alrm"), &traj.samples, model.dim())?;
        let lifted: Vec<State<f64>> = traj.samples.iter().map(|z| lift(&model, &model.split(z))).collect();
        let ps: Vec<DVector<f64>> = lifted.iter().map(|s| s.p.clone()).collect();
        let qs: Vec<DVector<f64>> = lifted.iter().map(|s| s.q.clone()).collect();
        write_matrix_columns(&dir.join("lifted_p.alrm"), &ps, model.n_sites())?;
        write_matrix_columns(&dir.join("lifted_q.alrm"), &qs, model.n_sites())?;
        csv_out::write(&dir.join("invariants.csv"), &INVARIANT_HEADER, invariant_rows(&traj))?;
        if cfg.is_damped() {
            let times = traj.step_times();
            let bal = |values: &[f64], kind| -> CliResult<Vec<f64>> {
                let s = DiagnosticSeries::new(times.clone(), values.to_vec(), kind)?;
                Ok(match balance_residuals(&s, cfg.lattice.mu, cfg.lattice.dt, &cfg.rates) {
                    Ok(r) => r.residuals.values,
                    Err(_) => vec![f64::NAN; values.len() - 1],
                })
            };
            let b_h = bal(&traj.hamiltonian, DiagnosticKind::Hamiltonian)?;
            let b_i = bal(&traj.momentum, DiagnosticKind::Momentum)?;
            csv_out::write(
                &dir.join("balance.csv"),
                &["step", "time[-]", "balance_residual_H[-]", "balance_residual_I[-]"],
                (0..b_h.len()).map(|k| vec![k.to_string(), real(times[k]), real(b_h[k]), real(b_i[k])]),
            )?;
        }
        out.push(RomReport {
            spec: *spec,
            variant: cfg.variant,
            hamiltonian_max_drift: max_relative_drift(&traj.hamiltonian)?,
            momentum_max_drift: max_relative_drift(&traj.momentum)?,
        });
    }
    Ok(out)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub spec: ModeSpec,
    pub rel_error: f64,
    /// `conservation` (against the FOM initial invariant) or
    /// `scaled_balance` (rescaled ROM invariant against the FOM initial one).
    pub aggregate_kind: &'static str,
    pub h_aggregate: f64,
    pub i_aggregate: f64,
    /// Same aggregates referenced to the ROM's own initial invariant.
    pub h_self: f64,
    pub i_self: f64,
    pub h_max_drift: f64,
    pub i_max_drift: f64,
    /// Per-step log-balance residual aggregates and their kinds.
    pub h_residual: f64,
    pub i_residual: f64,
    pub h_residual_kind: &'static str,
    pub i_residual_kind: &'static str,
}

pub const TABLE_HEADER: [&str; 15] = [
    "n_r",
    "n_d",
    "variant",
    "rel_error[-]",
    "aggregate",
    "h_aggregate[-]",
    "i_aggregate[-]",
    "h_self[-]",
    "i_self[-]",
    "h_max_drift[-]",
    "i_max_drift[-]",
    "h_residual[-]",
    "i_residual[-]",
    "h_residual_kind",
    "i_residual_kind",
];

/// The metrics of one reduced run against the full-order one.
#[allow(clippy::too_many_arguments)]
pub fn compare_series(
    cfg: &RunConfig,
    spec: ModeSpec,
    fom_states: &[DVector<f64>],
    rom_states: &[DVector<f64>],
    fom_h0: f64,
    fom_i0: f64,
    times: &[f64],
    rom_h: &[f64],
    rom_i: &[f64],
) -> CliResult<CompareRow> {
    let rel_error = relative_solution_error(fom_states, rom_states)?;
    let (mu, dt) = (cfg.lattice.mu, cfg.lattice.dt);
    let series = |v: &[f64], kind| DiagnosticSeries::new(times.to_vec(), v.to_vec(), kind);
    let sh = series(rom_h, DiagnosticKind::Hamiltonian)?;
    let si = series(rom_i, DiagnosticKind::Momentum)?;
    let (aggregate_kind, h_aggregate, i_aggregate, h_self, i_self) = if cfg.is_damped() {
        (
            "scaled_balance",
            scaled_balance_error(&sh, mu, cfg.rates.c_h, fom_h0)?,
            scaled_balance_error(&si, mu, cfg.rates.c_i, fom_i0)?,
            scaled_balance_error(&sh, mu, cfg.rates.c_h, rom_h[0])?,
            scaled_balance_error(&si, mu, cfg.rates.c_i, rom_i[0])?,
        )
    } else {
        (
            "conservation",
            conservation_error_against(rom_h, fom_h0)?,
            conservation_error_against(rom_i, fom_i0)?,
            conservation_error(rom_h)?,
            conservation_error(rom_i)?,
        )
    };
    let residual = |s: &DiagnosticSeries<f64>| match balance_residuals(s, mu, dt, &cfg.rates) {
        Ok(r) => (r.aggregate, r.aggregate_kind.label()),
        Err(_) => (f64::NAN, "undefined"),
    };
    let (h_residual, h_residual_kind) = residual(&sh);
    let (i_residual, i_residual_kind) = residual(&si);
    Ok(CompareRow {
        spec,
        rel_error,
        aggregate_kind,
        h_aggregate,
        i_aggregate,
        h_self,
        i_self,
        h_max_drift: max_relative_drift(rom_h)?,
        i_max_drift: max_relative_drift(rom_i)?,
        h_residual,
        i_residual,
        h_residual_kind,
        i_residual_kind,
    })
}

fn stacked_columns(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = p.nrows();
    (0..p.ncols())
        .map(|j| {
            let mut z = DVector::zeros(2 * n);
            z.rows_mut(0, n).copy_from(&p.column(j));
            z.rows_mut(n, n).copy_from(&q.column(j));
            z
        })
        .collect()
}

pub fn run_compare(cfg: &RunConfig, layout: &Layout, modes: Option<&[ModeSpec]>) -> CliResult<Vec<CompareRow>> {
    let specs = match modes {
        Some(m) => m.to_vec(),
        None => specs_from_models_csv(layout)?,
    };
    let fom = load_fom(layout)?;
    let fom_states = stacked_columns(&fom.p, &fom.q);
    let mut rows = Vec::new();
    for spec in &specs {
        let dir = layout.rom(spec);
        let lp = matrix_file::read(&dir.join("lifted_p.alrm"))?;
        let lq = matrix_file::read(&dir.join("lifted_q.alrm"))?;
        if lp.shape() != fom.p.shape() || lq.shape() != fom.q.shape() {
            return Err(CliError::corrupt(&dir, "reduced samples do not match the full-order sampling grid"));
        }
        let ipath = dir.join("invariants.csv");
        let inv = csv_out::read(&ipath)?;
        let times = inv.reals("time[-]", &ipath)?;
        if times != fom.step_times {
            return Err(CliError::corrupt(&ipath, "time grid differs from the full-order run"));
        }
        rows.push(compare_series(
            cfg,
            *spec,
            &fom_states,
            &stacked_columns(&lp, &lq),
            fom.hamiltonian[0],
            fom.momentum[0],
            &times,
            &inv.reals("hamiltonian[-]", &ipath)?,
            &inv.reals("momentum[-]", &ipath)?,
        )?);
    }
    let dir = layout.compare();
    ensure_dir(&dir)?;
    write_table(&dir.join("table.csv"), cfg.variant, &rows)?;
    Ok(rows)
}

pub fn write_table(path: &Path, variant: Variant, rows: &[CompareRow]) -> CliResult<()> {
    csv_out::write(
        path,
        &TABLE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.spec.n_r.to_string(),
                r.spec.n_d.to_string(),
                variant.label().to_string(),
                real(r.rel_error),
                r.aggregate_kind.to_string(),
                real(r.h_aggregate),
                real(r.i_aggregate),
                real(r.h_self),
                real(r.i_self),
                real(r.h_max_drift),
                real(r.i_max_drift),
                real(r.h_residual),
                real(r.i_residual),
                r.h_residual_kind.to_string(),
                r.i_residual_kind.to_string(),
            ]
        }),
    )
}

fn modulus(p: &DMatrix<f64>, q: &DMatrix<f64>, j: usize) -> Vec<f64> {
    p.column(j).iter().zip(q.column(j).iter()).map(|(a, b)| a.hypot(*b)).collect()
}

/// Figure data: soliton profiles, the FOM space-time modulus and invariant traces.
pub fn write_figures(cfg: &RunConfig, layout: &Layout, specs: &[ModeSpec]) -> CliResult<()> {
    let fom = load_fom(layout)?;
    let dir = layout.figures();
    ensure_dir(&dir)?;
    let x = cfg.lattice.grid();
    let last = fom.p.ncols() - 1;

    let mut runs: Vec<(String, DMatrix<f64>, DMatrix<f64>, PathBuf)> =
        vec![("fom".into(), fom.p.clone(), fom.q.clone(), layout.fom().join("invariants.csv"))];
    for spec in specs {
        let d = layout.rom(spec);
        runs.push((
            spec.label(),
            matrix_file::read(&d.join("lifted_p.alrm"))?,
            matrix_file::read(&d.join("lifted_q.alrm"))?,
            d.join("invariants.csv"),
        ));
    }

    let mut profile_rows = Vec::new();
    let mut trace_rows = Vec::new();
    for (label, p, q, inv_path) in &runs {
        let initial = modulus(p, q, 0);
        let fin = modulus(p, q, last);
        for (n, xn) in x.iter().enumerate() {
            profile_rows.push(vec![label.clone(), n.to_string(), real(*xn), real(initial[n]), real(fin[n])]);
        }
        let inv = csv_out::read(inv_path)?;
        let (s, t, h, i) = (
            inv.reals("step", inv_path)?,
            inv.reals("time[-]", inv_path)?,
            inv.reals("hamiltonian[-]", inv_path)?,
            inv.reals("momentum[-]", inv_path)?,
        );
        for k in 0..s.len() {
            trace_rows.push(vec![label.clone(), (s[k] as usize).to_string(), real(t[k]), real(h[k]), real(i[k])]);
        }
    }
    csv_out::write(
        &dir.join("profiles.csv"),
        &["label", "site", "x[-]", "modulus_initial[-]", "modulus_final[-]"],
        profile_rows,
    )?;
    csv_out::write(
        &dir.join("traces.csv"),
        &["label", "step", "time[-]", "hamiltonian[-]", "momentum[-]"],
        trace_rows,
    )?;
    let mut grid_rows = Vec::new();
    for j in (0..fom.p.ncols()).step_by(cfg.spacetime_every) {
        let m = modulus(&fom.p, &fom.q, j);
        for (n, xn) in x.iter().enumerate() {
            grid_rows.push(vec![j.to_string(), real(fom.sample_times[j]), real(*xn), real(m[n])]);
        }
    }
    csv_out::write(&dir.join("spacetime.csv"), &["sample", "time[-]", "x[-]", "modulus[-]"], grid_rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub fom: FomReport,
    pub reduce: ReduceReport,
    pub rom: Vec<RomReport>,
    pub rows: Vec<CompareRow>,
}

/// `fom -> reduce -> rom -> compare` over the sweep, then the figure data.
pub fn run_pipeline(cfg: &RunConfig, layout: &Layout, modes: Option<&[ModeSpec]>) -> CliResult<PipelineReport> {
    let specs = match modes {
        Some(m) => m.to_vec(),
        None => cfg.sweep.clone(),
    };
    if specs.is_empty() {
        return Err(CliError::Config("empty mode sweep".into()));
    }
    write_run_config(cfg, layout)?;
    let fom = run_fom(cfg, layout)?;
    let reduce = run_reduce(cfg, layout, Some(&specs))?;
    let rom = run_rom(cfg, layout, Some(&specs))?;
    let rows = run_compare(cfg, layout, Some(&specs))?;
    write_figures(cfg, layout, &specs)?;
    Ok(PipelineReport { fom, reduce, rom, rows })
}

/// Reads a mode list from a `--modes` argument.
pub fn modes_argument(arg: Option<&str>) -> CliResult<Option<Vec<ModeSpec>>> {
    arg.map(parse_modes).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load;

    fn small() -> RunConfig {
        load(None, Some("lattice.n_sites = 40\nlattice.half_length = 10\nlattice.t_final = 0.5\nsnapshots.stride = 2\nsweep.modes = 4, 6:5\n")).unwrap()
    }

    #[test]
    fn single_step_run_stores_two_snapshots() {
        let cfg = load(None, Some("lattice.t_final = 0.01\nsnapshots.stride = 1")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        let rep = run_fom(&cfg, &layout).unwrap();
        assert_eq!(rep.samples, 2);
        assert_eq!(matrix_file::read(&layout.fom().join("snapshots_p.alrm")).unwrap().ncols(), 2);
    }

    #[test]
    fn small_pipeline_runs_end_to_end() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        let rep = run_pipeline(&cfg, &layout, None).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.fom.samples, 26);
        for f in ["run.cfg", "compare/table.csv", "figures/profiles.csv", "figures/spacetime.csv", "figures/traces.csv", "reduce/spectrum.csv"] {
            assert!(layout.root.join(f).exists(), "{f}");
        }
        // rom and compare also work from models.csv alone.
        let again = run_compare(&cfg, &layout, None).unwrap();
        assert_eq!(again, rep.rows);
    }

    #[test]
    fn full_rank_model_reproduces_the_fom() {
        let cfg = load(None, Some("lattice.n_sites = 16\nlattice.half_length = 4\nlattice.t_final = 0.2\nsnapshots.stride = 1\n")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        run_fom(&cfg, &layout).unwrap();
        let spec = [ModeSpec { n_r: 16, n_d: 16 }];
        run_reduce(&cfg, &layout, Some(&spec)).unwrap();
        run_rom(&cfg, &layout, Some(&spec)).unwrap();
        let rows = run_compare(&cfg, &layout, Some(&spec)).unwrap();
        assert!(rows[0].rel_error < 1e-10, "{}", rows[0].rel_error);
    }

    #[test]
    fn compare_of_identical_and_scaled_runs() {
        let cfg = small();
        let states: Vec<DVector<f64>> = (0..5).map(|k| DVector::from_fn(4, |i, _| 1.0 + (i + k) as f64)).collect();
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.01).collect();
        let h = vec![2.0; 5];
        let i = vec![-1.0; 5];
        let spec = ModeSpec { n_r: 1, n_d: 1 };
        let row = compare_series(&cfg, spec, &states, &states, 2.0, -1.0, &times, &h, &i).unwrap();
        assert_eq!((row.rel_error, row.h_aggregate, row.i_aggregate), (0.0, 0.0, 0.0));
        let eps = 1e-3;
        let scaled: Vec<_> = states.iter().map(|s| s * (1.0 + eps)).collect();
        let row = compare_series(&cfg, spec, &states, &scaled, 2.0, -1.0, &times, &h, &i).unwrap();
        assert!((row.rel_error - eps).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        let spec = [ModeSpec { n_r: 4, n_d: 4 }];
        run_pipeline(&cfg, &layout, Some(&spec)).unwrap();
        let other = cfg.with_entry("lattice.t_final", "0.4").unwrap();
        run_rom(&other, &layout, Some(&spec)).unwrap();
        assert!(matches!(run_compare(&cfg, &layout, Some(&spec)), Err(CliError::Corrupt { .. })));
    }

    #[test]
    fn oversized_mode_counts_are_config_errors() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        run_fom(&cfg, &layout).unwrap();
        let spec = [ModeSpec { n_r: 41, n_d: 3 }];
        assert!(matches!(run_reduce(&cfg, &layout, Some(&spec)), Err(CliError::Config(_))));
    }
}
