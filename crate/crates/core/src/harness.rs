//! Height-bound experiments: sweeps over `(H, n)`, persisted reports, plot data
//! and the invariant checks behind the `check` subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{jacobi_potential, mean_curvature, shape_data, Jet2, Orientation};
use crate::model::{curvature_report, killing_residual, Point3, SpaceParams};
use crate::rotational::hemisphere_height;
use crate::solver::grid::{DomainGrid, DomainShape};
use crate::solver::{graph_height, sigma_profile, solve_dirichlet, FailureMode, GraphSolution, SigmaBin, SolverConfig};
use crate::stability::{angle_jacobi_residual, assemble_jacobi, cylinder_stability, smallest_eigenvalue};

pub const REPORT_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "heights.dat";
pub const PLOT_HEADER: &str = "H n height hemi_height bound lambda_min status";
pub const MIN_GRID: usize = 16;

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// `2π/√(3c)` for `c > 0`.
pub fn bound_from_c(c: f64) -> Option<f64> {
    (c > 0.0).then(|| 2.0 * std::f64::consts::PI / (3.0 * c).sqrt())
}

/// Height bound for compact H-graphs with boundary in a section, available when
/// `c = 3H² + S > 0` (the scalar curvature `S` is constant).
pub fn rosenberg_bound(h: f64, params: &SpaceParams) -> Result<Option<f64>> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveH(h));
    }
    Ok(bound_from_c(3.0 * h * h + params.scalar_curvature()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckToggles {
    pub rosenberg: bool,
    pub conjecture: bool,
    pub sigma_profile: bool,
    pub stability: bool,
}

impl Default for CheckToggles {
    fn default() -> Self {
        Self { rosenberg: true, conjecture: true, sigma_profile: false, stability: true }
    }
}

/// Sweep description. Lengths are in model coordinates and `H` in the units of the
/// metric; `output` is a directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: SpaceParams,
    pub domain: DomainShape,
    #[serde(rename = "H_list")]
    pub h_list: Vec<f64>,
    pub grid_sizes: Vec<usize>,
    pub output: PathBuf,
    #[serde(default)]
    pub boundary_value: f64,
    #[serde(default)]
    pub checks: CheckToggles,
    /// Worker threads for the rows; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    /// Also write every converged solution as JSON next to the report.
    #[serde(default)]
    pub save_solutions: bool,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h_list.is_empty() {
            return Err(Error::ConfigInvalid("H_list is empty".into()));
        }
        if let Some(h) = self.h_list.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::ConfigInvalid(format!("H values must be positive, got {h}")));
        }
        if self.grid_sizes.is_empty() {
            return Err(Error::ConfigInvalid("grid_sizes is empty".into()));
        }
        if let Some(n) = self.grid_sizes.iter().find(|n| **n < MIN_GRID) {
            return Err(Error::ConfigInvalid(format!("grid sizes must be at least {MIN_GRID}, got {n}")));
        }
        if self.output.as_os_str().is_empty() {
            return Err(Error::ConfigInvalid("output path is empty".into()));
        }
        self.solver.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        for &n in &self.grid_sizes {
            let grid = DomainGrid::new(self.domain, n).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
            grid.check_inside(&self.params).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Converged,
    Failed(FailureMode),
}

impl RowStatus {
    pub fn label(self) -> &'static str {
        match self {
            RowStatus::Converged => "converged",
            RowStatus::Failed(m) => m.label(),
        }
    }
}

/// One `(H, n)` row of a sweep. Absent values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    #[serde(rename = "H")]
    pub h: f64,
    pub n: usize,
    pub status: RowStatus,
    pub message: Option<String>,
    pub height: Option<f64>,
    pub hemisphere_height: Option<f64>,
    pub rosenberg_bound: Option<f64>,
    /// `height / hemisphere_height − 1`.
    pub conjecture_excess: Option<f64>,
    pub lambda_min: Option<f64>,
    pub residual_max: Option<f64>,
    pub angle_residual: Option<f64>,
    pub min_abs_nu: Option<f64>,
    pub iterations: Option<usize>,
    pub sigma_profile: Option<Vec<SigmaBin>>,
    pub solution_file: Option<String>,
}

impl ReportRecord {
    pub fn converged(&self) -> bool {
        self.status == RowStatus::Converged
    }

    /// False only for a converged row that exceeds a defined bound by more than `tol`.
    pub fn respects_bound(&self, tol: f64) -> bool {
        match (self.height, self.rosenberg_bound) {
            (Some(h), Some(b)) if self.converged() => h <= b + tol,
            _ => true,
        }
    }
}

fn column(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"))
}

/// Whitespace-separated plot table with a header line.
pub fn plot_table(records: &[ReportRecord]) -> String {
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{:e} {} {} {} {} {} {}\n",
            r.h,
            r.n,
            column(r.height),
            column(r.hemisphere_height),
            column(r.rosenberg_bound),
            column(r.lambda_min),
            r.status.label()
        ));
    }
    out
}

fn solution_file_name(h: f64, n: usize) -> String {
    format!("solution_H{h:e}_n{n}.json")
}

fn measure_row(cfg: &ExperimentConfig, h: f64, n: usize, hemi: Option<f64>, bound: Option<f64>) -> Result<ReportRecord> {
    let grid = DomainGrid::new(cfg.domain, n)?;
    let mut rec = ReportRecord {
        h,
        n,
        status: RowStatus::Converged,
        message: None,
        height: None,
        hemisphere_height: hemi,
        rosenberg_bound: bound,
        conjecture_excess: None,
        lambda_min: None,
        residual_max: None,
        angle_residual: None,
        min_abs_nu: None,
        iterations: None,
        sigma_profile: None,
        solution_file: None,
    };
    let sol = match solve_dirichlet(&grid, cfg.boundary_value, h, &cfg.params, &cfg.solver) {
        Ok(sol) => sol,
        Err(e) => {
            rec.status = RowStatus::Failed(FailureMode::of(&e));
            rec.message = Some(e.to_string());
            return Ok(rec);
        }
    };
    let height = graph_height(&sol)?;
    rec.height = Some(height);
    rec.residual_max = Some(sol.residual_max);
    rec.min_abs_nu = Some(sol.min_abs_nu);
    rec.iterations = Some(sol.iterations);
    if cfg.checks.conjecture {
        rec.conjecture_excess = hemi.map(|m| height / m - 1.0);
    }
    if cfg.checks.stability {
        let op = assemble_jacobi(&sol)?;
        rec.lambda_min = Some(smallest_eigenvalue(&op)?.lambda_min);
        rec.angle_residual = Some(angle_jacobi_residual(&sol)?);
    }
    if cfg.checks.sigma_profile {
        rec.sigma_profile = Some(sigma_profile(&sol)?);
    }
    if cfg.save_solutions {
        let name = solution_file_name(h, n);
        sol.save_json(&cfg.output.join(&name))?;
        rec.solution_file = Some(name);
    }
    Ok(rec)
}

/// Runs every `(H, n)` row (H-major), then writes the JSON report and the plot
/// table into `cfg.output`. Per-row solver failures become records; the order of
/// the records does not depend on the number of workers.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output)?;
    let per_h: Vec<(f64, Option<f64>, Option<f64>)> = cfg
        .h_list
        .iter()
        .map(|&h| {
            let hemi = if cfg.checks.conjecture { hemisphere_height(h, &cfg.params).ok() } else { None };
            let bound = if cfg.checks.rosenberg { rosenberg_bound(h, &cfg.params)? } else { None };
            Ok((h, hemi, bound))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<(f64, usize, Option<f64>, Option<f64>)> = per_h
        .iter()
        .flat_map(|&(h, hemi, bound)| cfg.grid_sizes.iter().map(move |&n| (h, n, hemi, bound)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let records: Vec<ReportRecord> = pool.install(|| {
        rows.par_iter()
            .map(|&(h, n, hemi, bound)| measure_row(cfg, h, n, hemi, bound))
            .collect::<Result<_>>()
    })?;

    write_atomic(&cfg.output.join(REPORT_FILE), serde_json::to_string_pretty(&records)?.as_bytes())?;
    write_atomic(&cfg.output.join(PLOT_FILE), plot_table(&records).as_bytes())?;
    Ok(records)
}

pub fn load_report(path: &Path) -> Result<Vec<ReportRecord>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Height of a persisted solution, for cross-checking the report.
pub fn reload_height(path: &Path) -> Result<f64> {
    graph_height(&GraphSolution::load_json(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        CheckOutcome { name: name.into(), value, threshold, passed: value <= threshold }
    }
}

pub const CHECK_SEED: u64 = 20_240_601;

fn random_xy(rng: &mut ChaCha8Rng, params: &SpaceParams) -> (f64, f64) {
    let r = params.domain_radius().map_or(2.0, |r| 0.8 * r);
    loop {
        let x = rng.gen_range(-r..r);
        let y = rng.gen_range(-r..r);
        if x * x + y * y < r * r {
            return (x, y);
        }
    }
}

fn random_jet(rng: &mut ChaCha8Rng, params: &SpaceParams) -> Jet2 {
    let (x, y) = random_xy(rng, params);
    Jet2 {
        x,
        y,
        f: rng.gen_range(-3.0..3.0),
        fx: rng.gen_range(-2.0..2.0),
        fy: rng.gen_range(-2.0..2.0),
        fxx: rng.gen_range(-2.0..2.0),
        fxy: rng.gen_range(-2.0..2.0),
        fyy: rng.gen_range(-2.0..2.0),
    }
}

/// Largest `|H|` of the section `z = const` at random points.
pub fn section_minimality_defect(params: &SpaceParams, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let (x, y) = random_xy(&mut rng, params);
        let jet = Jet2::constant(x, y, rng.gen_range(-3.0..3.0));
        worst = worst.max(mean_curvature(&jet, params, Orientation::Downward)?.abs());
    }
    Ok(worst)
}

/// Largest gap between `|σ|² + Ric(η)` and the closed-form Jacobi potential on random jets.
pub fn potential_consistency_defect(params: &SpaceParams, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let jet = random_jet(&mut rng, params);
        let sd = shape_data(&jet, params, Orientation::Downward)?;
        let ric = curvature_report(jet.point(), params)?.ricci_of(&sd.normal.components);
        worst = worst.max((sd.sigma_sq + ric - jacobi_potential(&jet, params)?).abs());
    }
    Ok(worst)
}

/// Largest residual of `∇_X ∂z = τ X × ∂z` at random points and vectors.
pub fn killing_defect(params: &SpaceParams, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let (x, y) = random_xy(&mut rng, params);
        let p = Point3::new(x, y, rng.gen_range(-5.0..5.0));
        let v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        worst = worst.max(killing_residual(p, &v, params)?);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderRow {
    #[serde(rename = "H")]
    pub h: f64,
    pub kappa: f64,
    /// `4H² + κ`
    pub criterion: f64,
    pub stable: bool,
    pub spectral_lambda_min: f64,
}

pub const CYLINDER_H: [f64; 8] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];
pub const CYLINDER_KAPPA: [f64; 4] = [0.0, -1.0, -4.0, -9.0];

/// Cylinder stability over `CYLINDER_H × CYLINDER_KAPPA` with `τ = 1/2`.
pub fn cylinder_table() -> Result<Vec<CylinderRow>> {
    let mut rows = Vec::new();
    for &kappa in &CYLINDER_KAPPA {
        let params = SpaceParams::new(kappa, 0.5)?;
        for &h in &CYLINDER_H {
            let s = cylinder_stability(h, &params)?;
            rows.push(CylinderRow {
                h,
                kappa,
                criterion: 4.0 * h * h + kappa,
                stable: s.stable,
                spectral_lambda_min: s.spectral_lambda_min,
            });
        }
    }
    Ok(rows)
}

/// Fast invariant suite: sphere heights, sections, potential, Killing field,
/// cylinder criterion, hemisphere decay and bound monotonicity.
pub fn run_checks() -> Result<Vec<CheckOutcome>> {
    let spaces = [SpaceParams::nil(0.5)?, SpaceParams::psl(-1.0, 0.5)?];
    let mut out = Vec::new();

    let mut sphere = 0.0_f64;
    for h in [0.5, 1.0, 2.0] {
        sphere = sphere.max((hemisphere_height(h, &SpaceParams::euclidean())? - 1.0 / h).abs());
    }
    out.push(CheckOutcome::at_most("euclidean hemisphere height 1/H", sphere, 1e-4));

    let mut minimal = 0.0_f64;
    let mut potential = 0.0_f64;
    let mut killing = 0.0_f64;
    for p in &spaces {
        minimal = minimal.max(section_minimality_defect(p, 200, CHECK_SEED)?);
        potential = potential.max(potential_consistency_defect(p, 500, CHECK_SEED + 1)?);
        killing = killing.max(killing_defect(p, 200, CHECK_SEED + 2)?);
    }
    out.push(CheckOutcome::at_most("sections are minimal", minimal, 1e-10));
    out.push(CheckOutcome::at_most("jacobi potential consistency", potential, 1e-6));
    out.push(CheckOutcome::at_most("killing identity", killing, 1e-8));

    let table = cylinder_table()?;
    let wrong = table
        .iter()
        .filter(|r| {
            let sign_ok = r.stable == (r.criterion <= 0.0);
            let spectral_ok = r.criterion.abs() <= 0.1 || (r.spectral_lambda_min >= 0.0) == r.stable;
            !(sign_ok && spectral_ok)
        })
        .count();
    out.push(CheckOutcome::at_most("cylinder criterion", wrong as f64, 0.0));

    let nil = SpaceParams::nil(0.5)?;
    let heights = [0.6, 1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|&h| hemisphere_height(h, &nil))
        .collect::<Result<Vec<_>>>()?;
    let increases = heights.windows(2).filter(|w| w[1] >= w[0]).count();
    out.push(CheckOutcome::at_most("hemisphere height decreases in H", increases as f64, 0.0));

    let cs: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
    let bounds: Vec<f64> = cs.iter().map(|&c| bound_from_c(c).unwrap_or(f64::NAN)).collect();
    let non_monotone = bounds.windows(2).filter(|w| !(w[1] < w[0])).count();
    out.push(CheckOutcome::at_most("bound decreases in c", non_monotone as f64, 0.0));
    Ok(out)
}
