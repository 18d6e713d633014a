//! The experiment subcommands.

use std::f64::consts::PI;
use std::time::Instant;

use ffembed::bem::{BemParams, BemSystem};
use ffembed::coefficients::{build_system, default_mtilde, equispaced_angles, solve_canonical, svd, Strategy};
use ffembed::embedding::{EmbeddingBasis, Thresholds};
use ffembed::experiment::{
    branch_index, direct_column, input_error, output_error, relative_sup_error, sample_angles, EmbeddingSolver, REFERENCE_REFINEMENT,
};
use ffembed::geometry::{RationalShape, ShapeKind};
use ffembed::linalg::{max_abs, CMatrix};
use ffembed::specialfun::{bessel_01, gauss_legendre};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, MAX_DEFAULT_GRID};
use crate::output::{num, CsvTable, RunMeta};
use crate::{CliError, ErrorReport};

/// Number of randomly placed incident angles checked against direct solves.
pub const SPOT_CHECKS: usize = 5;

struct Setup {
    shape: RationalShape,
    system: BemSystem,
    reference: BemSystem,
    embedding: EmbeddingSolver,
}

fn canonical_angles(cfg: &ExperimentConfig, shape: &RationalShape) -> Result<Vec<f64>, CliError> {
    let m = shape.m() as usize;
    let mtilde = cfg.mtilde.unwrap_or_else(|| default_mtilde(m));
    if cfg.strategy == 2 && mtilde < m {
        return Err(CliError::Config(format!("strategy two needs M̃ ≥ M = {m}, got {mtilde}")));
    }
    Ok(equispaced_angles(mtilde))
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    cfg.validate()?;
    let shape = cfg.load_shape()?;
    let angles = canonical_angles(cfg, &shape)?;
    let system = BemSystem::new(&shape, cfg.k, &cfg.bem).map_err(ffembed::experiment::ExperimentError::from)?;
    let reference =
        BemSystem::new(&shape, cfg.k, &cfg.bem.refined(REFERENCE_REFINEMENT)).map_err(ffembed::experiment::ExperimentError::from)?;
    let embedding = EmbeddingSolver::new(&system, &angles, cfg.strategy_value(), cfg.thresholds())?;
    Ok(Setup { shape, system, reference, embedding })
}

fn check_grid(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if !cfg.large_grid && (cfg.n_theta > MAX_DEFAULT_GRID || cfg.n_alpha > MAX_DEFAULT_GRID) {
        return Err(CliError::Config(format!("grids above {MAX_DEFAULT_GRID} per side need grid.large = true")));
    }
    Ok(())
}

fn describe(table: &mut CsvTable, s: &Setup) {
    table.meta("M", s.shape.m());
    table.meta("p", s.shape.p());
    table.meta("N", s.system.dof());
    table.meta("N_ref", s.reference.dof());
    table.meta("mtilde", s.embedding.basis().len());
}

/// Naive and stabilized errors along θ for one incident angle.
pub fn cmd_sweep(cfg: &ExperimentConfig, run: &RunMeta) -> Result<(CsvTable, ErrorReport), CliError> {
    let start = Instant::now();
    let s = setup(cfg)?;
    let thetas = sample_angles(cfg.n_theta);
    let e_in = input_error(s.embedding.basis(), &s.reference, &thetas);
    let col = s.embedding.column(cfg.alpha, &thetas)?;
    let naive = s.embedding.naive_column(cfg.alpha, &col.coefficients.values, &thetas);
    let reference = direct_column(&s.reference, cfg.alpha, &thetas);
    let scale = max_abs(&reference);

    let mut table = CsvTable::new(run, cfg, &["theta", "naive_error", "stabilized_error", "branch"]);
    describe(&mut table, &s);
    table.meta("E_in", num(e_in));
    table.meta("reference_sup_norm", num(scale));
    let mut branch_counts = [0; 5];
    let mut worst: f64 = 0.0;
    for (i, &t) in thetas.iter().enumerate() {
        let stab = (col.values[i].value - reference[i]).norm();
        let naive_err = (naive[i] - reference[i]).norm();
        let naive_err = if naive_err.is_nan() { f64::INFINITY } else { naive_err };
        worst = worst.max(stab);
        branch_counts[branch_index(col.values[i].branch)] += 1;
        table.push(vec![num(t), num(naive_err), num(stab), col.values[i].branch.label().to_string()]);
    }
    let e_out = worst / scale;
    let report = ErrorReport {
        e_in,
        e_out,
        ratio: e_out / e_in,
        cond: s.embedding.solver().condition_number(),
        b_norm: col.coefficients.norm,
        branch_counts,
        wall_time: start.elapsed(),
    };
    Ok((table, report))
}

/// Result of [`cmd_grid`]: `ln|D|` over the grid and the spot checks.
pub struct GridOutput {
    pub grid: CsvTable,
    pub spot: CsvTable,
    pub report: ErrorReport,
}

/// Full far-field map `ln|D(θ, α)|` plus spot checks at random α.
pub fn cmd_grid(cfg: &ExperimentConfig, run: &RunMeta) -> Result<GridOutput, CliError> {
    let start = Instant::now();
    check_grid(cfg)?;
    let s = setup(cfg)?;
    let thetas = sample_angles(cfg.n_theta);
    let alphas = sample_angles(cfg.n_alpha);
    let e_in = input_error(s.embedding.basis(), &s.reference, &thetas);

    let columns = alphas
        .par_iter()
        .map(|&a| -> Result<(Vec<Complex64>, [usize; 5], f64), CliError> {
            if let Some(j) = s.embedding.canonical_index(a) {
                let field = &s.embedding.basis().patterns()[j];
                let v = thetas.iter().map(|&t| field.far_field(Complex64::new(t, 0.0))).collect();
                return Ok((v, [0; 5], 1.0));
            }
            let col = s.embedding.column(a, &thetas)?;
            let mut counts = [0; 5];
            for e in &col.values {
                counts[branch_index(e.branch)] += 1;
            }
            Ok((col.far_field(), counts, col.coefficients.norm))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut header = vec!["theta".to_string()];
    header.extend(alphas.iter().map(|a| format!("alpha={}", num(*a))));
    let mut grid = CsvTable::with_header(run, cfg, header);
    describe(&mut grid, &s);
    grid.meta("E_in", num(e_in));
    grid.meta("values", "ln|D(theta, alpha)|");
    for (i, &t) in thetas.iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(columns.iter().map(|c| num(c.0[i].norm().ln())));
        grid.push(row);
    }
    let mut branch_counts = [0; 5];
    for c in &columns {
        for (total, n) in branch_counts.iter_mut().zip(c.1) {
            *total += n;
        }
    }
    let b_norm = columns.iter().map(|c| c.2).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spot_alphas: Vec<f64> = (0..SPOT_CHECKS).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let spots = spot_alphas
        .par_iter()
        .map(|&a| -> Result<_, CliError> { Ok((s.embedding.column(a, &thetas)?.far_field(), direct_column(&s.reference, a, &thetas))) })
        .collect::<Result<Vec<_>, _>>()?;
    let scale = spots.iter().map(|(_, r)| max_abs(r)).fold(0.0, f64::max);
    let mut spot = CsvTable::new(run, cfg, &["alpha", "theta", "log_abs_embedded", "log_abs_reference", "relative_error"]);
    describe(&mut spot, &s);
    let mut worst: f64 = 0.0;
    for (&a, (emb, r)) in spot_alphas.iter().zip(&spots) {
        for (i, &t) in thetas.iter().enumerate() {
            let err = (emb[i] - r[i]).norm() / scale;
            worst = worst.max(err);
            spot.push(vec![num(a), num(t), num(emb[i].norm().ln()), num(r[i].norm().ln()), num(err)]);
        }
    }
    spot.meta("E_in", num(e_in));
    spot.meta("max_relative_error", num(worst));
    let report = ErrorReport {
        e_in,
        e_out: worst,
        ratio: worst / e_in,
        cond: s.embedding.solver().condition_number(),
        b_norm,
        branch_counts,
        wall_time: start.elapsed(),
    };
    Ok(GridOutput { grid, spot, report })
}

/// Which canonical angle family the oversampling study uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleSet {
    /// `π/2, 3π/2, π, 0, 3π/4, 5π/4`; the first pair makes the system vanish.
    ScreenDegenerate,
    /// Twelve angles `2(m−1)π/12` then the midpoints `π/12 + α_{m−12}`.
    TriangleDegenerate,
    Equispaced,
}

impl AngleSet {
    pub fn for_shape(shape: &RationalShape) -> Self {
        if shape.kind() == ShapeKind::Screen {
            AngleSet::ScreenDegenerate
        } else if shape.vertices().len() == 3 && shape.p() == 3 && shape.m() == 12 {
            AngleSet::TriangleDegenerate
        } else {
            AngleSet::Equispaced
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AngleSet::ScreenDegenerate => "screen-degenerate",
            AngleSet::TriangleDegenerate => "triangle-degenerate",
            AngleSet::Equispaced => "equispaced",
        }
    }

    /// Angles for the largest study size; smaller sizes use a prefix.
    pub fn angles(&self, count: usize) -> Result<Vec<f64>, CliError> {
        let list: Vec<f64> = match self {
            AngleSet::ScreenDegenerate => vec![PI / 2.0, 1.5 * PI, PI, 0.0, 0.75 * PI, 1.25 * PI],
            AngleSet::TriangleDegenerate => {
                let base: Vec<f64> = (0..12).map(|m| 2.0 * m as f64 * PI / 12.0).collect();
                let extra: Vec<f64> = (0..4).map(|m| 2.0 * PI / 24.0 + base[m]).collect();
                base.into_iter().chain(extra).collect()
            }
            AngleSet::Equispaced => return Ok(equispaced_angles(count)),
        };
        if count > list.len() {
            return Err(CliError::Config(format!("{} supports at most {} angles", self.label(), list.len())));
        }
        Ok(list[..count].to_vec())
    }

    fn default_sizes(&self, m: usize) -> Vec<usize> {
        match self {
            AngleSet::ScreenDegenerate => vec![2, 3, 4, 5, 6],
            AngleSet::TriangleDegenerate => vec![12, 13, 14, 15, 16],
            AngleSet::Equispaced => vec![m, m + 1, default_mtilde(m)],
        }
    }
}

/// One row of the oversampling study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub angle_set: String,
    pub a: Option<f64>,
    pub mtilde: usize,
    pub strategy: Option<u8>,
    pub delta: Option<f64>,
    pub e_in: f64,
    pub e_out: Option<f64>,
    pub b_norm: Option<f64>,
    pub cond: f64,
    pub status: String,
}

impl StudyRow {
    fn cells(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        vec![
            self.angle_set.clone(),
            opt(self.a),
            self.mtilde.to_string(),
            self.strategy.map(|s| s.to_string()).unwrap_or_default(),
            opt(self.delta),
            num(self.e_in),
            opt(self.e_out),
            opt(self.b_norm),
            num(self.cond),
            self.status.clone(),
        ]
    }
}

/// Shifts used to probe the conditioning of twelve equispaced triangle angles.
pub const CONDITION_SHIFTS: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, PI / 24.0];

/// Output error and coefficient norm across `M̃`, strategy and `δ`.
pub fn cmd_oversampling_study(cfg: &ExperimentConfig, run: &RunMeta) -> Result<(CsvTable, Vec<StudyRow>), CliError> {
    cfg.validate()?;
    check_grid(cfg)?;
    let shape = cfg.load_shape()?;
    let m = shape.m() as usize;
    let set = AngleSet::for_shape(&shape);
    let mut sizes = if cfg.mtilde_list.is_empty() { set.default_sizes(m) } else { cfg.mtilde_list.clone() };
    sizes.sort_unstable();
    sizes.dedup();
    let largest = *sizes.last().expect("non-empty study sizes");
    let angles = set.angles(largest)?;
    let system = BemSystem::new(&shape, cfg.k, &cfg.bem).map_err(ffembed::experiment::ExperimentError::from)?;
    let reference =
        BemSystem::new(&shape, cfg.k, &cfg.bem.refined(REFERENCE_REFINEMENT)).map_err(ffembed::experiment::ExperimentError::from)?;
    let full = solve_canonical(&system, &angles).map_err(ffembed::experiment::ExperimentError::from)?;
    let thetas = sample_angles(cfg.n_theta);
    let alphas = sample_angles(cfg.n_alpha);
    let e_in = input_error(&full, &reference, &thetas);
    let thresholds = cfg.thresholds();

    let mut rows = Vec::new();
    for &mt in &sizes {
        let basis = EmbeddingBasis::new(full.p(), full.patterns()[..mt].to_vec());
        let full_cond = build_system(&basis).map(|s| s.condition_number()).unwrap_or(f64::NAN);
        let mut strategies = vec![Strategy::Two];
        strategies.extend(cfg.delta_list.iter().map(|&delta| Strategy::One { delta }));
        for strategy in strategies {
            let mut row = StudyRow {
                angle_set: set.label().to_string(),
                a: None,
                mtilde: mt,
                strategy: Some(strategy.number()),
                delta: strategy.delta(),
                e_in,
                e_out: None,
                b_norm: None,
                cond: full_cond,
                status: "ok".into(),
            };
            match EmbeddingSolver::from_basis(basis.clone(), m, strategy, thresholds) {
                Ok(emb) => {
                    let grid = output_error(&emb, &reference, &thetas, &alphas)?;
                    row.e_out = Some(grid.relative);
                    row.b_norm = Some(grid.max_coefficient_norm);
                    row.cond = emb.solver().condition_number();
                    if emb.solver().rank() == 0 {
                        row.status = "degenerate".into();
                    }
                }
                Err(e) => {
                    // no coefficients: the embedded far field is zero
                    row.e_out = Some(1.0);
                    row.b_norm = Some(0.0);
                    row.status = format!("failed: {e}").replace(',', ";");
                }
            }
            rows.push(row);
        }
    }
    if set == AngleSet::TriangleDegenerate {
        for a in CONDITION_SHIFTS {
            let shifted: Vec<f64> = (0..12).map(|j| a + j as f64 * PI / 6.0).collect();
            let basis = solve_canonical(&system, &shifted).map_err(ffembed::experiment::ExperimentError::from)?;
            let cond = build_system(&basis).map_err(ffembed::experiment::ExperimentError::from)?.condition_number();
            rows.push(StudyRow {
                angle_set: "shifted".into(),
                a: Some(a),
                mtilde: 12,
                strategy: None,
                delta: None,
                e_in,
                e_out: None,
                b_norm: None,
                cond,
                status: "ok".into(),
            });
        }
    }
    let mut table = CsvTable::new(
        run,
        cfg,
        &["angle_set", "a", "mtilde", "strategy", "delta", "e_in", "e_out", "b_norm", "cond", "status"],
    );
    table.meta("M", m);
    table.meta("N", system.dof());
    table.meta("N_ref", reference.dof());
    table.meta("E_in", num(e_in));
    for r in &rows {
        table.push(r.cells());
    }
    Ok((table, rows))
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub k: f64,
    pub shape: String,
    pub n: usize,
    pub e_in: f64,
    pub e_out: f64,
    pub ratio: f64,
    pub cond: f64,
}

/// Input and output errors over wavenumbers, shapes and mesh densities,
/// each shape and `k` against one reference four times finer than its
/// finest mesh.
pub fn cmd_table(cfg: &ExperimentConfig, run: &RunMeta) -> Result<(CsvTable, Vec<TableRow>), CliError> {
    cfg.validate()?;
    check_grid(cfg)?;
    if cfg.shape_list.is_empty() || cfg.k_list.is_empty() || cfg.epw_list.is_empty() {
        return Err(CliError::Config("table needs non-empty k, shape and element lists".into()));
    }
    let mut epw = cfg.epw_list.clone();
    epw.sort_by(f64::total_cmp);
    let finest = *epw.last().unwrap();
    let thetas = sample_angles(cfg.n_theta);
    let alphas = sample_angles(cfg.n_alpha);
    let mut rows = Vec::new();
    for &k in &cfg.k_list {
        for name in &cfg.shape_list {
            let shape = RationalShape::preset(name)?;
            let mut local = cfg.clone();
            local.mtilde = None;
            let angles = canonical_angles(&local, &shape)?;
            let ref_params = BemParams { elements_per_wavelength: finest * REFERENCE_REFINEMENT, ..cfg.bem };
            let reference = BemSystem::new(&shape, k, &ref_params).map_err(ffembed::experiment::ExperimentError::from)?;
            for &e in &epw {
                let params = BemParams { elements_per_wavelength: e, ..cfg.bem };
                let system = BemSystem::new(&shape, k, &params).map_err(ffembed::experiment::ExperimentError::from)?;
                let emb = EmbeddingSolver::new(&system, &angles, cfg.strategy_value(), cfg.thresholds())?;
                let e_in = input_error(emb.basis(), &reference, &thetas);
                let e_out = output_error(&emb, &reference, &thetas, &alphas)?.relative;
                rows.push(TableRow {
                    k,
                    shape: name.clone(),
                    n: system.dof(),
                    e_in,
                    e_out,
                    ratio: e_out / e_in,
                    cond: emb.solver().condition_number(),
                });
            }
        }
    }
    let mut table = CsvTable::new(run, cfg, &["k", "shape", "N", "e_in", "e_out", "ratio", "cond"]);
    table.meta("reference_elements_per_wavelength", num(finest * REFERENCE_REFINEMENT));
    for r in &rows {
        table.push(vec![num(r.k), r.shape.clone(), r.n.to_string(), num(r.e_in), num(r.e_out), num(r.ratio), num(r.cond)]);
    }
    Ok((table, rows))
}

/// Outcome of one self-test check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Fast sanity checks of every layer.
pub fn cmd_selftest() -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let b = bessel_01(5.0);
    let err = (b.j0 + 0.1775967713143383).abs().max((b.y0 + 0.30851762524903378).abs());
    checks.push(Check { name: "bessel", passed: err < 1e-12, detail: format!("J0/Y0 at 5: {err:.1e}") });

    let rule = gauss_legendre(10).map_err(|e| CliError::Config(e.to_string()))?;
    let err = (rule.integrate(-1.0, 1.0, |x| x.powi(18)) - 2.0 / 19.0).abs();
    checks.push(Check { name: "quadrature", passed: err < 1e-14, detail: format!("x^18 with 10 points: {err:.1e}") });

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = CMatrix::from_fn(6, 6, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let dec = svd(&x).map_err(|e| CliError::Numerical(e.into()))?;
    let err = dec.reconstruct().sub(&x).max_abs();
    checks.push(Check { name: "svd", passed: err < 1e-12, detail: format!("reconstruction {err:.1e}") });

    let shape = RationalShape::preset("screen")?;
    let params = BemParams::default();
    let system = BemSystem::new(&shape, 5.0, &params).map_err(ffembed::experiment::ExperimentError::from)?;
    let reference = BemSystem::new(&shape, 5.0, &params.refined(REFERENCE_REFINEMENT)).map_err(ffembed::experiment::ExperimentError::from)?;
    let emb = EmbeddingSolver::new(&system, &equispaced_angles(3), Strategy::Two, Thresholds::default())?;
    let thetas = sample_angles(100);
    let e_in = input_error(emb.basis(), &reference, &thetas);
    let alpha = 1.0;
    let col = emb.column(alpha, &thetas)?;
    let e_out = relative_sup_error(&col.far_field(), &direct_column(&reference, alpha, &thetas));
    checks.push(Check {
        name: "embedding",
        passed: e_out < 1e3 * e_in && e_in < 1e-2,
        detail: format!("screen k=5: E_in {e_in:.1e}, E_out {e_out:.1e}"),
    });
    Ok(checks)
}
