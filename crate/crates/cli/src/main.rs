use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ffembed_cli::commands::{cmd_grid, cmd_oversampling_study, cmd_selftest, cmd_sweep, cmd_table};
use ffembed_cli::config::{parse_angle, ExperimentConfig, ShapeSource};
use ffembed_cli::output::{CsvTable, RunMeta};
use ffembed_cli::CliError;

#[derive(Parser)]
#[command(name = "ffembed", version, about = "Far-field maps of rational polygons via a stabilized embedding formula")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Naive and stabilized errors along θ for one incident angle
    Sweep(Common),
    /// ln|D(θ, α)| over a grid, with spot checks against direct solves
    Grid(Common),
    /// Errors and coefficient norms across M̃, strategy and δ
    StudyOversampling {
        #[command(flatten)]
        common: Common,
        /// Comma-separated M̃ values
        #[arg(long)]
        mtilde_list: Option<String>,
        /// Comma-separated δ values for strategy one
        #[arg(long)]
        delta_list: Option<String>,
    },
    /// Input and output errors over wavenumbers, shapes and meshes
    Table {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_list: Option<String>,
        #[arg(long)]
        shapes: Option<String>,
        /// Comma-separated elements-per-wavelength values
        #[arg(long)]
        epw_list: Option<String>,
    },
    /// Quick checks of every layer
    Selftest,
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    geometry_file: Option<PathBuf>,
    #[arg(long)]
    k: Option<f64>,
    /// Incident angle; accepts forms like `5pi/4`
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long)]
    strategy: Option<u8>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    mtilde: Option<usize>,
    #[arg(long)]
    big_h: Option<f64>,
    #[arg(long)]
    small_h: Option<f64>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    n_alpha: Option<usize>,
    /// Allow grids above 200 per side
    #[arg(long)]
    large_grid: bool,
    #[arg(long)]
    elements_per_wavelength: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.shape {
            cfg.shape = ShapeSource::Preset(v.clone());
        }
        if let Some(v) = &self.geometry_file {
            cfg.shape = ShapeSource::File(v.clone());
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = &self.alpha {
            cfg.alpha = parse_angle("alpha", v)?;
        }
        if let Some(v) = self.strategy {
            cfg.strategy = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.mtilde {
            cfg.mtilde = Some(v);
        }
        if let Some(v) = self.big_h {
            cfg.big_h = v;
        }
        if let Some(v) = self.small_h {
            cfg.small_h = v;
        }
        if let Some(v) = self.n_theta {
            cfg.n_theta = v;
        }
        if let Some(v) = self.n_alpha {
            cfg.n_alpha = v;
        }
        if self.large_grid {
            cfg.large_grid = true;
        }
        if let Some(v) = self.elements_per_wavelength {
            cfg.bem.elements_per_wavelength = v;
        }
        if let Some(v) = &self.out {
            cfg.output = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = Some(v);
        }
        cfg.validate()?;
        if let Some(n) = cfg.threads {
            // only fails if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(cfg)
    }
}

fn write_table(table: &CsvTable, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => table.write(BufWriter::new(File::create(p)?))?,
        None => table.write(io::stdout().lock())?,
    }
    Ok(())
}

fn spot_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.spot.csv"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sweep(common) => {
            let cfg = common.resolve()?;
            let (table, report) = cmd_sweep(&cfg, &RunMeta::from_env("sweep"))?;
            write_table(&table, cfg.output.as_deref())?;
            eprintln!("{}", report.summary());
        }
        Command::Grid(common) => {
            let cfg = common.resolve()?;
            let out = cmd_grid(&cfg, &RunMeta::from_env("grid"))?;
            write_table(&out.grid, cfg.output.as_deref())?;
            if let Some(path) = cfg.output.as_deref() {
                write_table(&out.spot, Some(&spot_path(path)))?;
            }
            eprintln!("{}", out.report.summary());
        }
        Command::StudyOversampling { common, mtilde_list, delta_list } => {
            let mut cfg = common.resolve()?;
            if let Some(v) = mtilde_list {
                cfg.set("study.mtilde", &v)?;
            }
            if let Some(v) = delta_list {
                cfg.set("study.delta", &v)?;
            }
            let (table, rows) = cmd_oversampling_study(&cfg, &RunMeta::from_env("study-oversampling"))?;
            write_table(&table, cfg.output.as_deref())?;
            eprintln!("{} study rows", rows.len());
        }
        Command::Table { common, k_list, shapes, epw_list } => {
            let mut cfg = common.resolve()?;
            if let Some(v) = k_list {
                cfg.set("table.k", &v)?;
            }
            if let Some(v) = shapes {
                cfg.set("table.shapes", &v)?;
            }
            if let Some(v) = epw_list {
                cfg.set("table.elements_per_wavelength", &v)?;
            }
            let (table, rows) = cmd_table(&cfg, &RunMeta::from_env("table"))?;
            write_table(&table, cfg.output.as_deref())?;
            eprintln!("{} table rows", rows.len());
        }
        Command::Selftest => {
            let checks = cmd_selftest()?;
            let mut stdout = io::stdout().lock();
            for c in &checks {
                writeln!(stdout, "{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail)?;
            }
            if let Some(c) = checks.iter().find(|c| !c.passed) {
                return Err(CliError::SelfTest(c.name.to_string()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
