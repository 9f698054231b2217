mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use dicke_tc::analysis::power_spectrum;
use dicke_tc::quantum::{beat_period, peak_envelope};
use dicke_tc::sweep::{
    cell_seed, realize_drive, run_disorder_scan, run_kappa_scan, run_phase_diagram, simulate_level, MatrixField,
    RunOptions,
};
use dicke_tc::{classify_phase, AnalysisConfig, Error, Level, Result, SweepSpec, TrajectorySeries};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "dicke-tc", version, about = "Driven-dissipative Dicke, ADM and LMG time-crystal simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (see `dicke-tc presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to every available core.
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one drive point at the configured level and write the series.
    Trajectory(Common),
    /// Classify every cell of the configured grid (resumable JSON lines).
    PhaseDiagram {
        #[command(flatten)]
        common: Common,
        /// Stop after this many new cells; rerun to resume.
        #[arg(long)]
        max_cells: Option<usize>,
    },
    /// Classify the configured drive point for each κ of `kappa_scan`.
    KappaScan(Common),
    /// Relative crystalline fraction under drive disorder.
    DisorderScan(Common),
    /// Quantum evolution with peak envelope and beat period.
    Quantum(Common),
    /// DTWA ensemble evolution.
    Dtwa(Common),
    /// Classify a series file written by `trajectory`.
    Classify {
        /// Series CSV.
        series: PathBuf,
        /// Decorrelator to combine with the spectral diagnostics.
        #[arg(long, default_value_t = 0.0)]
        decorrelator: f64,
        /// `λ0/λ_cr` of the run.
        #[arg(long, default_value_t = 1.1)]
        ratio: f64,
        /// Configuration whose `analysis` block overrides the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// List built-in configurations.
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Trajectory(c) => cmd_trajectory(&Ctx::new(c, "trajectory")?),
        Command::PhaseDiagram { common, max_cells } => cmd_phase_diagram(&Ctx::new(common, "phase-diagram")?, max_cells),
        Command::KappaScan(c) => cmd_kappa_scan(&Ctx::new(c, "kappa-scan")?),
        Command::DisorderScan(c) => cmd_disorder_scan(&Ctx::new(c, "disorder-scan")?),
        Command::Quantum(c) => cmd_quantum(&Ctx::new(c, "quantum")?),
        Command::Dtwa(c) => cmd_dtwa(&Ctx::new(c, "dtwa")?),
        Command::Classify {
            series,
            decorrelator,
            ratio,
            config,
        } => {
            let analysis = match config {
                Some(p) => RunConfig::load(&p)?.analysis,
                None => AnalysisConfig::default(),
            };
            cmd_classify(&series, decorrelator, ratio, &analysis)
        }
        Command::Presets => {
            for name in config::preset_names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}

/// Resolved configuration plus output plumbing shared by every command.
struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    workers: Option<usize>,
    command: &'static str,
}

impl Ctx {
    fn new(c: Common, command: &'static str) -> Result<Self> {
        let mut cfg = match (&c.config, &c.preset) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => RunConfig::default(),
        };
        if let Some(seed) = c.seed {
            cfg.seed = seed;
        }
        if c.workers == Some(0) {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        Ok(Ctx {
            cfg,
            out: c.out,
            workers: c.workers,
            command,
        })
    }

    /// Metadata carried by every output file.
    fn header(&self) -> Value {
        json!({
            "command": self.command,
            "config_hash": format!("{:016x}", self.cfg.hash()),
            "seed": self.cfg.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.cfg,
        })
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }

    /// Create `name` in the output directory with the metadata header line.
    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.path(name)?;
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "# {}", self.header())?;
        Ok((path, w))
    }

    fn write_series(&self, name: &str, mut series: TrajectorySeries) -> Result<PathBuf> {
        series.meta.extra.insert("run".into(), self.header());
        let path = self.path(name)?;
        series.save_csv(&path)?;
        Ok(path)
    }

    /// Run the configured drive point at `level`.
    fn simulate(&self, level: &Level) -> Result<TrajectorySeries> {
        let spec = self.cfg.base_sweep();
        let params = spec.params(self.cfg.physics.kappa, self.cfg.drive.row, self.cfg.drive.omega_d);
        params.validate()?;
        let seed = cell_seed(self.cfg.seed, 0, 0, 0);
        let drive = realize_drive(params.drive.clone(), seed, self.cfg.horizon)?;
        let init = self.cfg.initial_state.with_reference_ratio(self.cfg.physics.lambda_ratio);
        simulate_level(
            level,
            &params,
            &drive,
            &init,
            self.cfg.horizon,
            seed,
            &self.cfg.numerics,
            &self.cfg.quantum_numerics,
        )
    }

    fn write_spectrum(&self, series: &TrajectorySeries) -> Result<()> {
        if !self.cfg.output.spectrum {
            return Ok(());
        }
        let period = series.meta.drive_period();
        let t_end = self.cfg.analysis.t_f.unwrap_or(self.cfg.horizon as f64) * period;
        let spec = power_spectrum(series, self.cfg.analysis.t_i * period, t_end)?;
        let (path, mut w) = self.create("spectrum.csv")?;
        spec.write_csv(&mut w)?;
        w.flush()?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn cmd_trajectory(ctx: &Ctx) -> Result<()> {
    let series = ctx.simulate(&ctx.cfg.level)?;
    ctx.write_spectrum(&series)?;
    println!("wrote {}", ctx.write_series("trajectory.csv", series)?.display());
    Ok(())
}

fn cmd_quantum(ctx: &Ctx) -> Result<()> {
    if !matches!(ctx.cfg.level, Level::Quantum { .. }) {
        return Err(Error::Config("quantum needs level.kind = \"quantum\"".into()));
    }
    let series = ctx.simulate(&ctx.cfg.level)?;
    let envelope = peak_envelope(&series)?;
    let period = series.meta.drive_period();
    let beat = beat_period(&envelope);
    let (path, mut w) = ctx.create("envelope.csv")?;
    writeln!(w, "t_over_Td,peak")?;
    for (t, v) in &envelope {
        writeln!(w, "{:.17e},{v:.17e}", t / period)?;
    }
    w.flush()?;
    println!("wrote {}", path.display());
    match beat.value() {
        Some(b) => println!("beat period {:.3} T_d", b / period),
        None => println!("beat period exceeds the horizon"),
    }
    ctx.write_spectrum(&series)?;
    println!("wrote {}", ctx.write_series("trajectory.csv", series)?.display());
    Ok(())
}

fn cmd_dtwa(ctx: &Ctx) -> Result<()> {
    if !matches!(ctx.cfg.level, Level::Dtwa { .. }) {
        return Err(Error::Config("dtwa needs level.kind = \"dtwa\"".into()));
    }
    cmd_trajectory(ctx)
}

fn cmd_phase_diagram(ctx: &Ctx, max_cells: Option<usize>) -> Result<()> {
    let specs: Vec<(String, SweepSpec)> = match &ctx.cfg.parameter_sweep {
        None => vec![(String::new(), ctx.cfg.sweep())],
        Some(p) => p
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut spec = ctx.cfg.sweep();
                match p.axis {
                    dicke_tc::sweep::SweepAxis::LambdaRatio => spec.lambda_ratio = v,
                    dicke_tc::sweep::SweepAxis::OmegaP => spec.omega_p = v,
                }
                (format!("_{i}"), spec)
            })
            .collect(),
    };
    for (suffix, spec) in specs {
        spec.validate()?;
        let output = ctx.path(&format!("phase_diagram{suffix}.jsonl"))?;
        let options = RunOptions {
            workers: ctx.workers,
            output: Some(output.clone()),
            max_new_cells: max_cells,
        };
        let diagram = run_phase_diagram(&spec, &options)?;
        println!("wrote {}", output.display());
        if !diagram.is_complete() {
            let done = diagram.completed().iter().filter(|c| **c).count();
            println!("{done} of {} cells done; rerun to resume", spec.n_cells());
            continue;
        }
        for k in 0..spec.kappa.len() {
            for field in MatrixField::ALL {
                let path = ctx.path(&format!("{}{suffix}_k{k}.csv", field.name()))?;
                diagram.write_matrix_csv(k, field, File::create(&path)?)?;
            }
        }
        let counts: Vec<String> = [
            dicke_tc::CellLabel::Tc,
            dicke_tc::CellLabel::Tqc,
            dicke_tc::CellLabel::Thermal,
            dicke_tc::CellLabel::LightInducedNP,
            dicke_tc::CellLabel::Other,
            dicke_tc::CellLabel::Error,
        ]
        .iter()
        .map(|&l| format!("{} {}", serde_json::to_value(l).unwrap().as_str().unwrap_or("?"), diagram.count(l)))
        .collect();
        println!("{}", counts.join(", "));
    }
    Ok(())
}

fn kappa_str(k: f64) -> String {
    if k.is_infinite() {
        "inf".into()
    } else {
        k.to_string()
    }
}

fn cmd_kappa_scan(ctx: &Ctx) -> Result<()> {
    let d = &ctx.cfg.drive;
    let records = run_kappa_scan(&ctx.cfg.base_sweep(), d.row, d.omega_d, &ctx.cfg.kappa_scan.kappa, ctx.workers)?;
    let (path, mut w) = ctx.create("kappa_scan.csv")?;
    writeln!(w, "kappa,model,label,d,T_TC_over_Td,T_TC_raw_over_Td,xi,n_photon_late")?;
    println!("{:>8} {:>5} {:>15} {:>10} {:>7}", "kappa", "model", "label", "d", "T_TC");
    for r in &records {
        let model = serde_json::to_value(r.model)?;
        let label = serde_json::to_value(r.label)?;
        let (model, label) = (model.as_str().unwrap_or("?"), label.as_str().unwrap_or("?"));
        writeln!(
            w,
            "{},{model},{label},{:e},{},{},{:e},{:e}",
            kappa_str(r.kappa),
            r.d,
            r.t_tc,
            r.t_tc_raw,
            r.xi,
            r.n_photon_late
        )?;
        println!("{:>8} {model:>5} {label:>15} {:>10.3e} {:>7}", kappa_str(r.kappa), r.d, r.t_tc);
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_disorder_scan(ctx: &Ctx) -> Result<()> {
    let (d, s) = (&ctx.cfg.drive, &ctx.cfg.disorder_scan);
    let rows = run_disorder_scan(
        &ctx.cfg.base_sweep(),
        d.row,
        d.omega_d,
        &s.kappa,
        s.kind,
        &s.strengths,
        s.n_realizations,
        ctx.workers,
    )?;
    let (path, mut w) = ctx.create("disorder_scan.csv")?;
    writeln!(w, "kappa,kind,strength,relative,relative_stderr,xi,xi_stderr,xi_clean,clean_label,flagged,n_realizations,clipped")?;
    for r in &rows {
        let kind = serde_json::to_value(r.kind)?;
        let label = serde_json::to_value(r.clean_label)?;
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{},{},{},{}",
            kappa_str(r.kappa),
            kind.as_str().unwrap_or("?"),
            r.strength,
            r.relative,
            r.relative_stderr,
            r.xi,
            r.xi_stderr,
            r.xi_clean,
            label.as_str().unwrap_or("?"),
            r.flagged,
            r.n_realizations,
            r.clipped
        )?;
        println!(
            "kappa {:>5} strength {:<6} Xi/Xi0 {:.4} ± {:.4}{}",
            kappa_str(r.kappa),
            r.strength,
            r.relative,
            r.relative_stderr,
            if r.flagged { " (clean drive not TC)" } else { "" }
        );
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_classify(path: &Path, d: f64, ratio: f64, analysis: &AnalysisConfig) -> Result<()> {
    analysis.validate()?;
    let series = TrajectorySeries::load_csv(path)?;
    let c = classify_phase(&series, d, ratio, analysis)?;
    println!("{}", serde_json::to_string_pretty(&c)?);
    Ok(())
}
