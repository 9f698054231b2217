//! Phase diagrams over `(D, ω_d)`, κ-scans, disorder scans and parameter
//! sweeps.
//!
//! Cells are independent and run on a rayon pool. The seed of a cell is
//! `split(master, [row, col, realization])`, so results never depend on the
//! worker count or on the order in which cells finish. Completed cells are
//! appended to a JSON-lines file by a single writer, which makes interrupted
//! sweeps resumable.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{classify_phase, decorrelator, subharmonic_weight, AnalysisConfig, Classification, PhaseLabel};
use crate::drive::{Drive, DriveProtocol};
use crate::dtwa::{evolve_dtwa, DtwaRun, InitialStateSpec};
use crate::error::{Error, Result};
use crate::mean_field::{self, Numerics};
use crate::models::{serde_kappa, ModelKind, ModelParams};
use crate::quantum::{self, QuantumNumerics, QuantumState};
use crate::rng::split;
use crate::series::{fnv1a, TrajectorySeries};

/// Sweeps above this many cells must run at the mean-field level.
pub const MAX_NON_MEAN_FIELD_CELLS: usize = 1000;

/// Evenly spaced axis, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        GridAxis { min, max, count }
    }

    pub fn point(value: f64) -> Self {
        GridAxis::new(value, value, 1)
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + i as f64 * step).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config(format!("{name} grid needs at least one point")));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::Config(format!("{name} grid needs finite min <= max")));
        }
        Ok(())
    }
}

/// Simulation level of every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Level {
    MeanField,
    Dtwa { n_spins: usize, n_traj: usize },
    /// `n_max` defaults to [`quantum::default_n_max`] for the open Dicke model.
    Quantum {
        n_spins: usize,
        #[serde(default)]
        n_max: Option<usize>,
    },
}

/// Drive family of a diagram; fixes the meaning of the row axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveShape {
    /// Rows are the duty cycle `D`.
    Binary,
    /// Rows are the modulation strength `f_d`.
    Sinusoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderKind {
    Duty,
    Amplitude,
}

/// Period-to-period disorder applied to every cell of a binary diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSpec {
    pub kind: DisorderKind,
    pub strength: f64,
}

pub mod serde_kappa_list {
    use super::serde_kappa;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct K(#[serde(with = "serde_kappa")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| K(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<K>::deserialize(d)?.into_iter().map(|k| k.0).collect())
    }
}

/// Full description of a sweep. All frequencies are in units of `ω0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// `D` for binary drives, `f_d` for sinusoidal ones.
    pub rows: GridAxis,
    pub omega_d: GridAxis,
    /// Dissipation rates; `"inf"` selects the LMG limit.
    #[serde(with = "serde_kappa_list")]
    pub kappa: Vec<f64>,
    /// `λ0/λ_cr`.
    pub lambda_ratio: f64,
    pub omega_p: f64,
    pub drive: DriveShape,
    /// Symmetry-broken states are rebuilt at `lambda_ratio` for every cell.
    pub initial_state: InitialStateSpec,
    /// Horizon in drive periods.
    pub horizon: usize,
    pub level: Level,
    pub disorder: Option<DisorderSpec>,
    pub seed: u64,
    pub analysis: AnalysisConfig,
    pub numerics: Numerics,
    pub quantum_numerics: QuantumNumerics,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            rows: GridAxis::new(0.0, 1.0, 101),
            omega_d: GridAxis::new(0.5, 2.5, 101),
            kappa: vec![1.0],
            lambda_ratio: 1.1,
            omega_p: 1.0,
            drive: DriveShape::Binary,
            initial_state: InitialStateSpec::broken(1.1),
            horizon: 100,
            level: Level::MeanField,
            disorder: None,
            seed: 0,
            analysis: AnalysisConfig::default(),
            numerics: Numerics::default(),
            quantum_numerics: QuantumNumerics::default(),
        }
    }
}

impl SweepSpec {
    /// Single-cell spec at `(row, ω_d)`.
    pub fn at_point(&self, row: f64, omega_d: f64) -> Self {
        SweepSpec {
            rows: GridAxis::point(row),
            omega_d: GridAxis::point(omega_d),
            ..self.clone()
        }
    }

    pub fn n_cells(&self) -> usize {
        self.kappa.len() * self.rows.count * self.omega_d.count
    }

    pub fn validate(&self) -> Result<()> {
        self.rows.validate("row")?;
        self.omega_d.validate("omega_d")?;
        if self.omega_d.min <= 0.0 {
            return Err(Error::Config("omega_d must be positive".into()));
        }
        if self.kappa.is_empty() {
            return Err(Error::Config("kappa list is empty".into()));
        }
        if self.kappa.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::Config("kappa values must be nonnegative".into()));
        }
        if !(self.lambda_ratio >= 0.0 && self.lambda_ratio.is_finite()) {
            return Err(Error::Config("lambda_ratio must be finite and nonnegative".into()));
        }
        if !(self.omega_p > 0.0 && self.omega_p.is_finite()) {
            return Err(Error::Config("omega_p must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one drive period".into()));
        }
        match self.level {
            Level::Dtwa { n_spins, n_traj } if n_spins == 0 || n_traj == 0 => {
                return Err(Error::Config("DTWA level needs n_spins and n_traj >= 1".into()));
            }
            Level::Quantum { n_spins: 0, .. } => {
                return Err(Error::Config("quantum level needs n_spins >= 1".into()));
            }
            _ => {}
        }
        if self.level != Level::MeanField && self.n_cells() > MAX_NON_MEAN_FIELD_CELLS {
            return Err(Error::Config(format!(
                "{} cells above the {MAX_NON_MEAN_FIELD_CELLS}-cell limit for DTWA/quantum sweeps; use the mean-field level",
                self.n_cells()
            )));
        }
        if let Some(dis) = self.disorder {
            if self.drive != DriveShape::Binary {
                return Err(Error::Config("disorder applies to binary drives only".into()));
            }
            if !(dis.strength >= 0.0) {
                return Err(Error::Config("disorder strength must be nonnegative".into()));
            }
        }
        self.analysis.validate()
    }

    /// FNV-1a hash of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        fnv1a(serde_json::to_string(self).expect("spec serializes").as_bytes())
    }

    /// Drive protocol of the cell at `(row, ω_d)`.
    pub fn protocol(&self, row: f64, omega_d: f64) -> DriveProtocol {
        let lambda0 = self.lambda_ratio;
        match (self.drive, self.disorder) {
            (DriveShape::Sinusoidal, _) => DriveProtocol::sinusoidal(lambda0, row, omega_d),
            (DriveShape::Binary, None) => DriveProtocol::binary(lambda0, row, omega_d),
            (DriveShape::Binary, Some(DisorderSpec { kind: DisorderKind::Duty, strength })) => {
                DriveProtocol::BinaryNoisyDuty {
                    lambda0,
                    duty: row,
                    omega_d,
                    duty_disorder: strength,
                }
            }
            (DriveShape::Binary, Some(DisorderSpec { kind: DisorderKind::Amplitude, strength })) => {
                DriveProtocol::BinaryNoisyAmplitude {
                    lambda0,
                    duty: row,
                    omega_d,
                    amplitude_disorder: strength,
                }
            }
        }
    }

    pub fn params(&self, kappa: f64, row: f64, omega_d: f64) -> ModelParams {
        ModelParams::new(1.0, self.omega_p, kappa, self.protocol(row, omega_d))
    }

    fn initial_state_for_cell(&self) -> InitialStateSpec {
        self.initial_state.with_reference_ratio(self.lambda_ratio)
    }
}

/// Seed of realization `r` of the cell at `(row, col)`.
pub fn cell_seed(master: u64, row: usize, col: usize, realization: usize) -> u64 {
    split(master, &[row as u64, col as u64, realization as u64])
}

/// Drive bound to a realization drawn from `seed` when the protocol is noisy.
pub fn realize_drive(protocol: DriveProtocol, seed: u64, n_periods: usize) -> Result<Drive> {
    let horizon = n_periods as f64 * protocol.period();
    let realization = if protocol.is_noisy() {
        Some(protocol.sample_disorder(seed, n_periods)?)
    } else {
        None
    };
    Drive::new(protocol, realization, horizon)
}

/// Run one trajectory (or ensemble, or quantum state) at the spec's level.
#[allow(clippy::too_many_arguments)]
pub fn simulate_level(
    level: &Level,
    params: &ModelParams,
    drive: &Drive,
    init: &InitialStateSpec,
    n_periods: usize,
    seed: u64,
    numerics: &Numerics,
    quantum_numerics: &QuantumNumerics,
) -> Result<TrajectorySeries> {
    let kind = params.kind();
    match *level {
        Level::MeanField => {
            let s0 = mean_field::initial_state(init, params, kind)?;
            mean_field::simulate(kind, params, drive, s0, n_periods, numerics)
        }
        Level::Dtwa { n_spins, n_traj } => {
            let run = DtwaRun {
                n_spins,
                n_traj,
                n_periods,
                seed,
            };
            evolve_dtwa(kind, params, drive, init, &run, numerics)
        }
        Level::Quantum { n_spins, n_max } => match kind {
            ModelKind::Lmg => {
                let psi = quantum::initial_state(init, n_spins, None, false)?;
                quantum::evolve_schrodinger(params, drive, &psi, n_periods, quantum_numerics)
            }
            ModelKind::Dm if params.kappa == 0.0 => {
                let cutoff = n_max.unwrap_or_else(|| quantum::default_n_max(params, n_spins));
                let psi: QuantumState = quantum::initial_state(init, n_spins, Some(cutoff), false)?;
                quantum::evolve_schrodinger(params, drive, &psi, n_periods, quantum_numerics)
            }
            ModelKind::Dm => {
                quantum::evolve_lindblad_adaptive(params, drive, init, n_spins, n_max, n_periods, quantum_numerics, 3)
                    .map(|r| r.0)
            }
            ModelKind::Adm => Err(Error::Domain(
                "no quantum evolution for the atom-only Dicke model; use the open Dicke or LMG limit".into(),
            )),
        },
    }
}

/// Simulate and classify one cell.
///
/// The decorrelator always comes from a pair of mean-field trajectories; at
/// the DTWA and quantum levels the label is computed from that level's series
/// with the mean-field `d`.
pub fn evaluate_cell(spec: &SweepSpec, kappa: f64, row: f64, omega_d: f64, seed: u64) -> Result<(ModelKind, Classification)> {
    let params = spec.params(kappa, row, omega_d);
    params.validate()?;
    let kind = params.kind();
    let drive = realize_drive(params.drive.clone(), seed, spec.horizon)?;
    let init = spec.initial_state_for_cell();
    let s0 = mean_field::initial_state(&init, &params, kind)?;
    let (d, mf) = decorrelator(kind, &params, &drive, s0, spec.horizon, &spec.numerics, &spec.analysis)?;
    let series = match spec.level {
        Level::MeanField => mf,
        level => simulate_level(&level, &params, &drive, &init, spec.horizon, seed, &spec.numerics, &spec.quantum_numerics)?,
    };
    Ok((kind, classify_phase(&series, d, spec.lambda_ratio, &spec.analysis)?))
}

/// Cell label, with `Error` for cells whose evaluation failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellLabel {
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "TQC")]
    Tqc,
    Thermal,
    LightInducedNP,
    Other,
    Error,
}

impl From<PhaseLabel> for CellLabel {
    fn from(l: PhaseLabel) -> Self {
        match l {
            PhaseLabel::Tc => CellLabel::Tc,
            PhaseLabel::Tqc => CellLabel::Tqc,
            PhaseLabel::Thermal => CellLabel::Thermal,
            PhaseLabel::LightInducedNP => CellLabel::LightInducedNP,
            PhaseLabel::Other => CellLabel::Other,
        }
    }
}

impl CellLabel {
    /// Integer code used in CSV matrices.
    pub fn code(self) -> i32 {
        match self {
            CellLabel::Tc => 1,
            CellLabel::Tqc => 2,
            CellLabel::Thermal => 3,
            CellLabel::LightInducedNP => 4,
            CellLabel::Other => 0,
            CellLabel::Error => -1,
        }
    }
}

/// One JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub kappa_index: usize,
    pub row: usize,
    pub col: usize,
    /// Row coordinate (`D`, or `f_d` for sinusoidal diagrams).
    #[serde(rename = "D")]
    pub row_value: f64,
    pub wd: f64,
    #[serde(with = "serde_kappa")]
    pub kappa: f64,
    pub model: ModelKind,
    pub label: CellLabel,
    pub d: f64,
    #[serde(rename = "T_TC_over_Td")]
    pub t_tc: f64,
    #[serde(rename = "T_TC_raw_over_Td")]
    pub t_tc_raw: f64,
    pub xi: f64,
    pub n_photon_late: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn run_cell(spec: &SweepSpec, k: usize, row: usize, col: usize, rows: &[f64], cols: &[f64]) -> CellRecord {
    let kappa = spec.kappa[k];
    let seed = cell_seed(spec.seed, row, col, 0);
    let mut rec = CellRecord {
        kappa_index: k,
        row,
        col,
        row_value: rows[row],
        wd: cols[col],
        kappa,
        model: crate::models::dispatch_model(kappa, 1.0),
        label: CellLabel::Error,
        d: 0.0,
        t_tc: 0.0,
        t_tc_raw: 0.0,
        xi: 0.0,
        n_photon_late: 0.0,
        seed,
        error: None,
    };
    match evaluate_cell(spec, kappa, rows[row], cols[col], seed) {
        Ok((model, c)) => {
            rec.model = model;
            rec.label = c.label.into();
            rec.d = c.d;
            rec.t_tc = c.t_tc;
            rec.t_tc_raw = c.t_tc_raw;
            rec.xi = c.xi;
            rec.n_photon_late = c.n_photon_late;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// All cells of a sweep, sorted by `(kappa_index, row, col)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub spec: SweepSpec,
    pub spec_hash: u64,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    pub cells: Vec<CellRecord>,
}

impl PhaseDiagram {
    fn index(&self, k: usize, row: usize, col: usize) -> usize {
        (k * self.rows.len() + row) * self.cols.len() + col
    }

    /// Completion bitmap in `(kappa_index, row, col)` order.
    pub fn completed(&self) -> Vec<bool> {
        let mut done = vec![false; self.spec.n_cells()];
        for c in &self.cells {
            done[self.index(c.kappa_index, c.row, c.col)] = true;
        }
        done
    }

    pub fn is_complete(&self) -> bool {
        self.cells.len() == self.spec.n_cells()
    }

    pub fn cell(&self, k: usize, row: usize, col: usize) -> Option<&CellRecord> {
        self.cells
            .binary_search_by_key(&(k, row, col), |c| (c.kappa_index, c.row, c.col))
            .ok()
            .map(|i| &self.cells[i])
    }

    pub fn count(&self, label: CellLabel) -> usize {
        self.cells.iter().filter(|c| c.label == label).count()
    }

    /// One diagnostic as a `rows × cols` CSV matrix for dissipation rate `k`.
    pub fn write_matrix_csv<W: Write>(&self, k: usize, field: MatrixField, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(
            w,
            "# {}",
            serde_json::json!({
                "field": field,
                "kappa": self.spec.kappa.get(k).map(|v| if v.is_infinite() { "inf".to_string() } else { v.to_string() }),
                "spec_hash": format!("{:016x}", self.spec_hash),
                "seed": self.spec.seed,
                "version": env!("CARGO_PKG_VERSION"),
            })
        )?;
        write!(w, "row\\wd")?;
        for c in &self.cols {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (r, rv) in self.rows.iter().enumerate() {
            write!(w, "{rv}")?;
            for c in 0..self.cols.len() {
                match self.cell(k, r, c) {
                    Some(cell) => write!(w, ",{}", field.value(cell))?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Diagnostic exported by [`PhaseDiagram::write_matrix_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixField {
    Label,
    Decorrelator,
    Lifetime,
    Xi,
    NPhotonLate,
}

impl MatrixField {
    pub const ALL: [MatrixField; 5] = [
        MatrixField::Label,
        MatrixField::Decorrelator,
        MatrixField::Lifetime,
        MatrixField::Xi,
        MatrixField::NPhotonLate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatrixField::Label => "label",
            MatrixField::Decorrelator => "d",
            MatrixField::Lifetime => "t_tc",
            MatrixField::Xi => "xi",
            MatrixField::NPhotonLate => "n_photon_late",
        }
    }

    fn value(self, c: &CellRecord) -> String {
        match self {
            MatrixField::Label => c.label.code().to_string(),
            MatrixField::Decorrelator => format!("{:e}", c.d),
            MatrixField::Lifetime => c.t_tc.to_string(),
            MatrixField::Xi => format!("{:e}", c.xi),
            MatrixField::NPhotonLate => format!("{:e}", c.n_photon_late),
        }
    }
}

/// Execution options that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    /// JSON-lines file to append to (and resume from, when it exists).
    pub output: Option<PathBuf>,
    /// Stop after this many new cells (the remaining ones stay pending).
    pub max_new_cells: Option<usize>,
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec_hash: String,
    seed: u64,
    version: String,
    spec: SweepSpec,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: Header,
}

/// Read the completed records of an existing JSON-lines file, dropping a
/// torn final line. Fails if the file belongs to a different spec.
fn load_existing(path: &Path, spec: &SweepSpec) -> Result<Vec<CellRecord>> {
    let text = std::fs::read_to_string(path)?;
    let complete = match text.rfind('\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < text.len() {
        OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
    }
    let mut lines = text[..complete].lines();
    let Some(first) = lines.next() else {
        return Ok(Vec::new());
    };
    let header: HeaderLine = serde_json::from_str(first)
        .map_err(|e| Error::Config(format!("{}: not a sweep output file ({e})", path.display())))?;
    if header.header.spec_hash != format!("{:016x}", spec.hash()) {
        return Err(Error::Config(format!(
            "{} was written for a different sweep spec; refusing to resume",
            path.display()
        )));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Evaluate every cell of `spec`, resuming from `options.output` if it exists.
pub fn run_phase_diagram(spec: &SweepSpec, options: &RunOptions) -> Result<PhaseDiagram> {
    spec.validate()?;
    let rows = spec.rows.values();
    let cols = spec.omega_d.values();
    let mut cells = match &options.output {
        Some(p) if p.exists() => load_existing(p, spec)?,
        _ => Vec::new(),
    };
    let mut writer = match &options.output {
        Some(p) => {
            let fresh = !p.exists() || std::fs::metadata(p)?.len() == 0;
            let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(p)?);
            if fresh {
                let header = HeaderLine {
                    header: Header {
                        spec_hash: format!("{:016x}", spec.hash()),
                        seed: spec.seed,
                        version: env!("CARGO_PKG_VERSION").into(),
                        spec: spec.clone(),
                    },
                };
                writeln!(w, "{}", serde_json::to_string(&header)?)?;
                w.flush()?;
            }
            Some(w)
        }
        None => None,
    };
    let done: HashSet<(usize, usize, usize)> = cells.iter().map(|c| (c.kappa_index, c.row, c.col)).collect();
    let (nr, nc) = (rows.len(), cols.len());
    let mut todo: Vec<(usize, usize, usize)> = (0..spec.kappa.len())
        .flat_map(|k| (0..nr).flat_map(move |r| (0..nc).map(move |c| (k, r, c))))
        .filter(|key| !done.contains(key))
        .collect();
    if let Some(m) = options.max_new_cells {
        todo.truncate(m);
    }
    let pool = pool(options.workers)?;
    let (tx, rx) = mpsc::channel::<CellRecord>();
    let mut write_error = None;
    std::thread::scope(|s| {
        let (rows, cols, todo) = (&rows, &cols, &todo);
        s.spawn(move || {
            pool.install(|| {
                todo.par_iter()
                    .for_each_with(tx, |tx, &(k, r, c)| {
                        let _ = tx.send(run_cell(spec, k, r, c, rows, cols));
                    })
            })
        });
        for rec in rx {
            if let (Some(w), None) = (writer.as_mut(), write_error.as_ref()) {
                let res = serde_json::to_string(&rec)
                    .map_err(Error::from)
                    .and_then(|line| writeln!(w, "{line}").and_then(|_| w.flush()).map_err(Error::from));
                if let Err(e) = res {
                    write_error = Some(e);
                }
            }
            cells.push(rec);
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    cells.sort_by_key(|c| (c.kappa_index, c.row, c.col));
    Ok(PhaseDiagram {
        spec: spec.clone(),
        spec_hash: spec.hash(),
        rows,
        cols,
        cells,
    })
}

/// One cell per dissipation rate at a fixed drive point.
pub fn run_kappa_scan(base: &SweepSpec, row: f64, omega_d: f64, kappas: &[f64], workers: Option<usize>) -> Result<Vec<CellRecord>> {
    if kappas.is_empty() {
        return Err(Error::Config("kappa list is empty".into()));
    }
    let spec = SweepSpec {
        kappa: kappas.to_vec(),
        ..base.at_point(row, omega_d)
    };
    Ok(run_phase_diagram(
        &spec,
        &RunOptions {
            workers,
            ..Default::default()
        },
    )?
    .cells)
}

/// Disorder-averaged crystalline fraction at one drive point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRow {
    #[serde(with = "serde_kappa")]
    pub kappa: f64,
    pub kind: DisorderKind,
    pub strength: f64,
    /// `Ξ/Ξ_0`.
    pub relative: f64,
    pub relative_stderr: f64,
    pub xi: f64,
    pub xi_stderr: f64,
    pub xi_clean: f64,
    pub clean_label: CellLabel,
    /// Set when the clean drive is not a TC at this point.
    pub flagged: bool,
    pub n_realizations: usize,
    /// Duty draws clipped to `[0, 1]`, summed over realizations.
    pub clipped: usize,
}

/// Crystalline fraction over `n_realizations` disordered drives for every
/// `(κ, strength)` pair.
///
/// Realization `r` at strength index `s` uses seed `split(master, [0, s, r])`
/// for every κ, so the rates are compared on identical disorder draws.
pub fn run_disorder_scan(
    base: &SweepSpec,
    duty: f64,
    omega_d: f64,
    kappas: &[f64],
    kind: DisorderKind,
    strengths: &[f64],
    n_realizations: usize,
    workers: Option<usize>,
) -> Result<Vec<DisorderRow>> {
    if kappas.is_empty() || strengths.is_empty() || n_realizations == 0 {
        return Err(Error::Config("disorder scan needs kappa values, strengths and realizations".into()));
    }
    let clean_spec = SweepSpec {
        drive: DriveShape::Binary,
        disorder: None,
        ..base.at_point(duty, omega_d)
    };
    clean_spec.validate()?;
    let td = std::f64::consts::TAU / omega_d;
    let t_f = clean_spec.analysis.t_f.map_or(clean_spec.horizon as f64 * td, |p| p * td);
    let pool = pool(workers)?;
    pool.install(|| {
        let clean: Vec<(CellLabel, f64)> = kappas
            .par_iter()
            .map(|&kappa| {
                let (_, c) = evaluate_cell(&clean_spec, kappa, duty, omega_d, cell_seed(base.seed, 0, 0, 0))?;
                Ok((c.label.into(), c.xi))
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize, usize)> = (0..kappas.len())
            .flat_map(|k| (0..strengths.len()).flat_map(move |s| (0..n_realizations).map(move |r| (k, s, r))))
            .collect();
        let weights: Vec<(f64, usize)> = jobs
            .par_iter()
            .map(|&(k, s, r)| {
                let spec = SweepSpec {
                    kappa: vec![kappas[k]],
                    disorder: Some(DisorderSpec {
                        kind,
                        strength: strengths[s],
                    }),
                    ..clean_spec.clone()
                };
                let params = spec.params(kappas[k], duty, omega_d);
                let drive = realize_drive(params.drive.clone(), cell_seed(base.seed, 0, s, r), spec.horizon)?;
                let series = simulate_level(
                    &spec.level,
                    &params,
                    &drive,
                    &spec.initial_state_for_cell(),
                    spec.horizon,
                    cell_seed(base.seed, 0, s, r),
                    &spec.numerics,
                    &spec.quantum_numerics,
                )?;
                let clipped = drive.realization().map_or(0, |r| r.clipped);
                Ok((subharmonic_weight(&series, omega_d, t_f)?, clipped))
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(kappas.len() * strengths.len());
        for (k, &kappa) in kappas.iter().enumerate() {
            for (s, &strength) in strengths.iter().enumerate() {
                let start = (k * strengths.len() + s) * n_realizations;
                let chunk = &weights[start..start + n_realizations];
                let w: Vec<f64> = chunk.iter().map(|c| c.0).collect();
                let cf = crate::analysis::crystalline_fraction(&w, clean[k].1)?;
                out.push(DisorderRow {
                    kappa,
                    kind,
                    strength,
                    relative: cf.relative,
                    relative_stderr: cf.relative_stderr,
                    xi: cf.xi,
                    xi_stderr: cf.xi_stderr,
                    xi_clean: cf.xi_clean,
                    clean_label: clean[k].0,
                    flagged: clean[k].0 != CellLabel::Tc,
                    n_realizations,
                    clipped: chunk.iter().map(|c| c.1).sum(),
                });
            }
        }
        Ok(out)
    })
}

/// Swept parameter of [`run_parameter_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// `λ0/λ_cr`; symmetry-broken initial states follow the coupling.
    LambdaRatio,
    /// `ωp/ω0`.
    OmegaP,
}

/// One diagram per value of `axis`, everything else fixed by `base`.
pub fn run_parameter_sweep(base: &SweepSpec, axis: SweepAxis, values: &[f64], workers: Option<usize>) -> Result<Vec<PhaseDiagram>> {
    if values.is_empty() {
        return Err(Error::Config("parameter sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let mut spec = base.clone();
            match axis {
                SweepAxis::LambdaRatio => spec.lambda_ratio = v,
                SweepAxis::OmegaP => spec.omega_p = v,
            }
            run_phase_diagram(
                &spec,
                &RunOptions {
                    workers,
                    ..Default::default()
                },
            )
        })
        .collect()
}

/// Load a diagram from a JSON-lines file written by [`run_phase_diagram`].
pub fn load_phase_diagram(path: &Path) -> Result<PhaseDiagram> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))??;
    let header: HeaderLine = serde_json::from_str(&first)?;
    let spec = header.header.spec;
    let mut cells = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from an interrupted run is skipped
        match serde_json::from_str::<CellRecord>(&line) {
            Ok(c) => cells.push(c),
            Err(_) => break,
        }
    }
    cells.sort_by_key(|c| (c.kappa_index, c.row, c.col));
    Ok(PhaseDiagram {
        spec_hash: spec.hash(),
        rows: spec.rows.values(),
        cols: spec.omega_d.values(),
        spec,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kappa: f64) -> SweepSpec {
        SweepSpec {
            rows: GridAxis::new(0.3, 0.65, 2),
            omega_d: GridAxis::new(1.3, 1.4, 2),
            kappa: vec![kappa],
            horizon: 100,
            ..Default::default()
        }
    }

    #[test]
    fn grid_axis_values() {
        assert_eq!(GridAxis::point(0.4).values(), vec![0.4]);
        let v = GridAxis::new(0.0, 1.0, 11).values();
        assert_eq!(v.len(), 11);
        assert!((v[10] - 1.0).abs() < 1e-15);
        assert!((v[3] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trips_with_infinite_kappa() {
        let spec = SweepSpec {
            kappa: vec![0.0, 1.0, f64::INFINITY],
            level: Level::Quantum { n_spins: 4, n_max: Some(8) },
            ..Default::default()
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"inf\""));
        let back: SweepSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.hash(), spec.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<SweepSpec>(r#"{"horizon": 10, "colour": 1}"#).is_err());
    }

    #[test]
    fn large_quantum_grids_refused() {
        let spec = SweepSpec {
            level: Level::Quantum { n_spins: 4, n_max: None },
            ..Default::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let ok = SweepSpec {
            rows: GridAxis::new(0.0, 1.0, 10),
            omega_d: GridAxis::new(1.0, 2.0, 10),
            ..spec
        };
        ok.validate().unwrap();
    }

    #[test]
    fn seeds_depend_on_cell_only() {
        assert_eq!(cell_seed(9, 1, 2, 0), split(9, &[1, 2, 0]));
        assert_ne!(cell_seed(9, 1, 2, 0), cell_seed(9, 2, 1, 0));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let spec = small(1.0);
        let one = run_phase_diagram(&spec, &RunOptions { workers: Some(1), ..Default::default() }).unwrap();
        let three = run_phase_diagram(&spec, &RunOptions { workers: Some(3), ..Default::default() }).unwrap();
        assert_eq!(one, three);
        assert!(one.is_complete());
        assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&three).unwrap());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let spec = small(f64::INFINITY);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.jsonl");
        let opts = |max| RunOptions {
            workers: Some(2),
            output: Some(path.clone()),
            max_new_cells: max,
        };
        let partial = run_phase_diagram(&spec, &opts(Some(1))).unwrap();
        assert_eq!(partial.cells.len(), 1);
        assert_eq!(partial.completed().iter().filter(|d| **d).count(), 1);
        // simulate a torn write
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        write!(f, "{{\"kappa_index\": 0, \"ro").unwrap();
        drop(f);
        let resumed = run_phase_diagram(&spec, &opts(None)).unwrap();
        let fresh = run_phase_diagram(&spec, &RunOptions::default()).unwrap();
        assert_eq!(resumed, fresh);
        assert_eq!(load_phase_diagram(&path).unwrap(), fresh);
        let other = SweepSpec { seed: 1, ..spec };
        assert!(matches!(run_phase_diagram(&other, &opts(None)), Err(Error::Config(_))));
    }

    #[test]
    fn failed_cells_are_recorded() {
        // the quantum level has no atom-only Dicke evolution
        let spec = SweepSpec {
            kappa: vec![1e3],
            level: Level::Quantum { n_spins: 2, n_max: None },
            ..small(1e3).at_point(0.3, 1.4)
        };
        let diag = run_phase_diagram(&spec, &RunOptions::default()).unwrap();
        assert_eq!(diag.cells[0].label, CellLabel::Error);
        assert!(diag.cells[0].error.as_ref().unwrap().contains("atom-only"));
    }

    #[test]
    fn matrix_export_shape() {
        let diag = run_phase_diagram(&small(f64::INFINITY), &RunOptions::default()).unwrap();
        let mut buf = Vec::new();
        diag.write_matrix_csv(0, MatrixField::Label, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# {"));
        assert!(lines[0].contains("\"kappa\":\"inf\""));
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2].split(',').count(), 3);
    }

    #[test]
    fn zero_disorder_keeps_the_clean_fraction() {
        let rows = run_disorder_scan(&SweepSpec::default(), 0.3, 1.4, &[f64::INFINITY], DisorderKind::Duty, &[0.0], 2, Some(1)).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].relative - 1.0).abs() < 1e-12);
        assert_eq!(rows[0].clean_label, CellLabel::Tc);
        assert!(!rows[0].flagged);
    }

    #[test]
    fn single_value_parameter_sweep_is_the_base_diagram() {
        let spec = small(f64::INFINITY).at_point(0.3, 1.4);
        let sweep = run_parameter_sweep(&spec, SweepAxis::LambdaRatio, &[1.1], None).unwrap();
        assert_eq!(sweep.len(), 1);
        assert_eq!(sweep[0], run_phase_diagram(&spec, &RunOptions::default()).unwrap());
    }
}
