use std::path::Path;

use serde::{Deserialize, Serialize};

use dicke_tc::models::serde_kappa;
use dicke_tc::series::fnv1a;
use dicke_tc::sweep::{serde_kappa_list, DisorderKind, DisorderSpec, DriveShape, GridAxis, SweepAxis};
use dicke_tc::{AnalysisConfig, Error, InitialStateSpec, Level, Numerics, QuantumNumerics, Result, SweepSpec};

/// Model constants. Frequencies are in units of `ω0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub omega_p: f64,
    /// `"inf"` selects the LMG limit.
    #[serde(with = "serde_kappa")]
    pub kappa: f64,
    /// `λ0/λ_cr`.
    pub lambda_ratio: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            omega_p: 1.0,
            kappa: 1.0,
            lambda_ratio: 1.1,
        }
    }
}

/// Drive of single-point runs. `row` is the duty cycle for binary drives and
/// the modulation strength for sinusoidal ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveBlock {
    pub shape: DriveShape,
    pub row: f64,
    pub omega_d: f64,
    pub disorder: Option<DisorderSpec>,
}

impl Default for DriveBlock {
    fn default() -> Self {
        DriveBlock {
            shape: DriveShape::Binary,
            row: 0.65,
            omega_d: 1.3,
            disorder: None,
        }
    }
}

/// Grid of the phase-diagram command. An empty `kappa` list falls back to
/// `physics.kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub rows: GridAxis,
    pub omega_d: GridAxis,
    #[serde(with = "serde_kappa_list")]
    pub kappa: Vec<f64>,
}

impl Default for GridBlock {
    fn default() -> Self {
        let spec = SweepSpec::default();
        GridBlock {
            rows: spec.rows,
            omega_d: spec.omega_d,
            kappa: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaScanBlock {
    #[serde(with = "serde_kappa_list")]
    pub kappa: Vec<f64>,
}

impl Default for KappaScanBlock {
    fn default() -> Self {
        KappaScanBlock {
            kappa: vec![0.0, 0.1, 1.0, 5.0, 10.0, 21.0, 1e2, 1e3, f64::INFINITY],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisorderScanBlock {
    #[serde(with = "serde_kappa_list")]
    pub kappa: Vec<f64>,
    pub kind: DisorderKind,
    pub strengths: Vec<f64>,
    pub n_realizations: usize,
}

impl Default for DisorderScanBlock {
    fn default() -> Self {
        DisorderScanBlock {
            kappa: vec![1.0, f64::INFINITY],
            kind: DisorderKind::Duty,
            strengths: vec![0.0, 0.025, 0.05, 0.1],
            n_realizations: 100,
        }
    }
}

/// Optional scan of one model constant over several phase diagrams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSweepBlock {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Also write the power spectrum of `j_x` over the analysis window.
    pub spectrum: bool,
}

/// Full run configuration. Every default is written back into the output
/// headers, so a header alone reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physics: Physics,
    pub drive: DriveBlock,
    pub initial_state: InitialStateSpec,
    pub level: Level,
    /// Horizon in drive periods.
    pub horizon: usize,
    pub seed: u64,
    pub analysis: AnalysisConfig,
    pub numerics: Numerics,
    pub quantum_numerics: QuantumNumerics,
    pub grid: GridBlock,
    pub kappa_scan: KappaScanBlock,
    pub disorder_scan: DisorderScanBlock,
    pub parameter_sweep: Option<ParameterSweepBlock>,
    pub output: OutputBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = SweepSpec::default();
        RunConfig {
            physics: Physics::default(),
            drive: DriveBlock::default(),
            initial_state: spec.initial_state,
            level: spec.level,
            horizon: spec.horizon,
            seed: spec.seed,
            analysis: spec.analysis,
            numerics: spec.numerics,
            quantum_numerics: spec.quantum_numerics,
            grid: GridBlock::default(),
            kappa_scan: KappaScanBlock::default(),
            disorder_scan: DisorderScanBlock::default(),
            parameter_sweep: None,
            output: OutputBlock::default(),
        }
    }
}

const PRESETS: [(&str, &str); 9] = [
    ("lmg-trajectory", include_str!("../../../docs/presets/lmg-trajectory.toml")),
    ("dissipative-trajectory", include_str!("../../../docs/presets/dissipative-trajectory.toml")),
    ("kappa-scan-circle", include_str!("../../../docs/presets/kappa-scan-circle.toml")),
    ("diagram-dissipative", include_str!("../../../docs/presets/diagram-dissipative.toml")),
    ("diagram-polarized-down", include_str!("../../../docs/presets/diagram-polarized-down.toml")),
    ("disorder-scan", include_str!("../../../docs/presets/disorder-scan.toml")),
    ("quantum-lmg-strong", include_str!("../../../docs/presets/quantum-lmg-strong.toml")),
    ("dtwa-lmg-strong", include_str!("../../../docs/presets/dtwa-lmg-strong.toml")),
    ("quantum-open-dicke", include_str!("../../../docs/presets/quantum-open-dicke.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = if origin.ends_with(".json") {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|p| p.0 == name).ok_or_else(|| {
            let known: Vec<_> = preset_names().collect();
            Error::Config(format!("unknown preset {name:?}; available: {}", known.join(", ")))
        })?;
        Self::parse(text, &format!("preset {name}"))
    }

    pub fn validate(&self) -> Result<()> {
        // the grid is checked by the phase-diagram command, where its size matters
        self.base_sweep().validate()?;
        self.initial_state.validate()?;
        if self.kappa_scan.kappa.is_empty() {
            return Err(Error::Config("kappa_scan.kappa is empty".into()));
        }
        if self.disorder_scan.kappa.is_empty()
            || self.disorder_scan.strengths.is_empty()
            || self.disorder_scan.n_realizations == 0
        {
            return Err(Error::Config(
                "disorder_scan needs kappa values, strengths and n_realizations > 0".into(),
            ));
        }
        if let Some(p) = &self.parameter_sweep {
            if p.values.is_empty() {
                return Err(Error::Config("parameter_sweep.values is empty".into()));
            }
        }
        Ok(())
    }

    /// FNV-1a hash of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        fnv1a(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    fn spec_with(&self, rows: GridAxis, omega_d: GridAxis, kappa: Vec<f64>) -> SweepSpec {
        SweepSpec {
            rows,
            omega_d,
            kappa,
            lambda_ratio: self.physics.lambda_ratio,
            omega_p: self.physics.omega_p,
            drive: self.drive.shape,
            initial_state: self.initial_state,
            horizon: self.horizon,
            level: self.level,
            disorder: self.drive.disorder,
            seed: self.seed,
            analysis: self.analysis,
            numerics: self.numerics,
            quantum_numerics: self.quantum_numerics,
        }
    }

    /// Single-cell spec at the configured drive point and `physics.kappa`.
    pub fn base_sweep(&self) -> SweepSpec {
        self.spec_with(
            GridAxis::point(self.drive.row),
            GridAxis::point(self.drive.omega_d),
            vec![self.physics.kappa],
        )
    }

    /// Spec of the phase-diagram command.
    pub fn sweep(&self) -> SweepSpec {
        let kappa = if self.grid.kappa.is_empty() {
            vec![self.physics.kappa]
        } else {
            self.grid.kappa.clone()
        };
        self.spec_with(self.grid.rows, self.grid.omega_d, kappa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in preset_names() {
            RunConfig::preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("[physics]\nkapa = 1.0\n", "test.toml").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("kapa"), "{err}");
    }

    #[test]
    fn kappa_accepts_inf() {
        let cfg = RunConfig::parse("[physics]\nkappa = \"inf\"\n", "test.toml").unwrap();
        assert!(cfg.physics.kappa.is_infinite());
    }

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text, "x.json").unwrap(), cfg);
    }
}
