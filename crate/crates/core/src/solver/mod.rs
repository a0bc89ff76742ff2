//! Dirichlet problem for vertical graphs of prescribed constant mean curvature.
//!
//! Unknowns are the interior nodal heights of a [`DomainGrid`]; boundary nodes
//! carry the constant boundary value. The discrete equation at each interior
//! node is `H(jet) − H_target = 0`, with the jet read off centered differences.
//! It is solved by damped Newton on the residual linearization, falling back to
//! pseudo-transient continuation when the line search stalls.

pub mod grid;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use serde::{Deserialize, Serialize};

pub use grid::{DomainGrid, DomainShape, GridSpec, JetStencil, Layout};

use crate::error::{Error, Result};
use crate::graph::{affine_mean_curvature, shape_data_at, Jet2, Orientation, ShapeData};
use crate::model::{AmbientPoint, Point3, SpaceParams};

/// Default threshold on `min |ν|` below which the iterate is no longer a graph.
pub const BLOWUP_NU: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_residual: f64,
    pub max_newton: usize,
    /// Initial Newton step factor; the line search halves it on failure.
    pub damping: f64,
    pub max_halvings: usize,
    /// Pseudo-time steps allowed once plain Newton has stalled.
    pub max_pseudo_steps: usize,
    /// Number of intervals in an H-continuation sweep.
    pub continuation_steps: usize,
    /// Relative step for differentiating H with respect to the first derivatives
    /// of the jet when linearizing the residual.
    pub jet_fd_step: f64,
    pub blowup_nu: f64,
    pub orientation: Orientation,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_newton: 50,
            damping: 1.0,
            max_halvings: 30,
            max_pseudo_steps: 2000,
            continuation_steps: 10,
            jet_fd_step: 1e-6,
            blowup_nu: BLOWUP_NU,
            orientation: Orientation::Downward,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidConfig("tol_residual must be positive".into()));
        }
        if self.max_newton < 1 {
            return Err(Error::InvalidConfig("max_newton must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig("damping must lie in (0, 1]".into()));
        }
        if !(self.jet_fd_step > 0.0) {
            return Err(Error::InvalidConfig("jet_fd_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSolution {
    pub grid: DomainGrid,
    pub values: Vec<f64>,
    pub params: SpaceParams,
    pub h_target: f64,
    pub boundary_value: f64,
    pub orientation: Orientation,
    pub residual_max: f64,
    pub converged: bool,
    pub iterations: usize,
    pub min_abs_nu: f64,
    pub max_sigma_interior: f64,
    pub blowup_threshold: f64,
}

impl GraphSolution {
    pub fn shape_at(&self, node: usize) -> Result<ShapeData> {
        let jet = self.grid.jet(node, &self.values);
        let ambient = AmbientPoint::new(jet.point(), &self.params)?;
        shape_data_at(&ambient, &jet, self.orientation)
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        crate::harness::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureMode {
    NonConvergence,
    VerticalBlowup,
    OutOfDomain,
    Other,
}

impl FailureMode {
    pub fn of(e: &Error) -> Self {
        match e {
            Error::NonConvergence { .. } => FailureMode::NonConvergence,
            Error::VerticalBlowup { .. } => FailureMode::VerticalBlowup,
            Error::OutOfDomain { .. } => FailureMode::OutOfDomain,
            _ => FailureMode::Other,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FailureMode::NonConvergence => "NonConvergence",
            FailureMode::VerticalBlowup => "VerticalBlowup",
            FailureMode::OutOfDomain => "OutOfDomain",
            FailureMode::Other => "Other",
        }
    }
}

/// Discrete nonlinear problem on one grid.
struct Problem<'a> {
    grid: &'a DomainGrid,
    ambient: Vec<AmbientPoint>,
    h_target: f64,
    cfg: &'a SolverConfig,
}

struct Evaluation {
    residual: Vec<f64>,
    max_abs: f64,
    norm2: f64,
    min_abs_nu: f64,
    max_sigma: f64,
}

impl<'a> Problem<'a> {
    fn new(grid: &'a DomainGrid, params: &SpaceParams, h_target: f64, cfg: &'a SolverConfig) -> Result<Self> {
        let ambient = grid
            .interior_nodes()
            .iter()
            .map(|&k| {
                let [x, y] = grid.position(k);
                AmbientPoint::new(Point3::new(x, y, 0.0), params)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, ambient, h_target, cfg })
    }

    /// `None` when some jet is degenerate (the iterate is not a graph anymore).
    fn evaluate(&self, values: &[f64]) -> Option<Evaluation> {
        let nodes = self.grid.interior_nodes();
        let mut residual = Vec::with_capacity(nodes.len());
        let mut min_abs_nu = f64::INFINITY;
        let mut max_sigma = 0.0_f64;
        for (u, &k) in nodes.iter().enumerate() {
            let jet = self.grid.jet(k, values);
            let sd = shape_data_at(&self.ambient[u], &jet, self.cfg.orientation).ok()?;
            let r = sd.mean_curvature - self.h_target;
            if !r.is_finite() {
                return None;
            }
            residual.push(r);
            min_abs_nu = min_abs_nu.min(sd.nu.abs());
            max_sigma = max_sigma.max(sd.sigma_sq.sqrt());
        }
        let max_abs = residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        let norm2 = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
        Some(Evaluation { residual, max_abs, norm2, min_abs_nu, max_sigma })
    }

    /// Triplets of the residual Jacobian with respect to the interior unknowns,
    /// and its diagonal.
    fn jacobian_entries(&self, values: &[f64]) -> Result<(Vec<Triplet<usize, usize, f64>>, Vec<f64>)> {
        let nodes = self.grid.interior_nodes();
        let mut triplets = Vec::with_capacity(nodes.len() * 13);
        let mut diag = vec![0.0; nodes.len()];
        let o = self.cfg.orientation;
        for (u, &k) in nodes.iter().enumerate() {
            let jet = self.grid.jet(k, values);
            let amb = &self.ambient[u];
            let affine = affine_mean_curvature(amb, &jet, o)?;
            let dx = self.cfg.jet_fd_step * (1.0 + jet.fx.abs());
            let dy = self.cfg.jet_fd_step * (1.0 + jet.fy.abs());
            let h = |j: Jet2| -> Result<f64> { Ok(shape_data_at(amb, &j, o)?.mean_curvature) };
            let dh_dfx = (h(Jet2 { fx: jet.fx + dx, ..jet })? - h(Jet2 { fx: jet.fx - dx, ..jet })?) / (2.0 * dx);
            let dh_dfy = (h(Jet2 { fy: jet.fy + dy, ..jet })? - h(Jet2 { fy: jet.fy - dy, ..jet })?) / (2.0 * dy);
            let grad = [dh_dfx, dh_dfy, affine.fxx, affine.fxy, affine.fyy];
            for (node, w) in &self.grid.stencil(k).terms {
                if let Some(col) = self.grid.unknown_of(*node) {
                    let v: f64 = (0..5).map(|c| grad[c] * w[c]).sum();
                    if col == u {
                        diag[u] += v;
                    }
                    triplets.push(Triplet::new(u, col, v));
                }
            }
        }
        Ok((triplets, diag))
    }

    fn newton_direction(&self, values: &[f64], residual: &[f64], shift: &[f64]) -> Result<Vec<f64>> {
        let (mut triplets, _) = self.jacobian_entries(values)?;
        for (u, &s) in shift.iter().enumerate() {
            if s != 0.0 {
                triplets.push(Triplet::new(u, u, s));
            }
        }
        let n = residual.len();
        let jac = SparseColMat::try_new_from_triplets(n, n, &triplets).map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let lu = jac.sp_lu().map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let rhs = Col::<f64>::from_fn(residual.len(), |i| -residual[i]);
        let sol = lu.solve(&rhs);
        let dir: Vec<f64> = (0..residual.len()).map(|i| sol[i]).collect();
        if dir.iter().all(|v| v.is_finite()) {
            Ok(dir)
        } else {
            Err(Error::LinearSolve("singular Jacobian".into()))
        }
    }

    fn apply_step(&self, values: &[f64], dir: &[f64], alpha: f64) -> Vec<f64> {
        let mut out = values.to_vec();
        for (u, &k) in self.grid.interior_nodes().iter().enumerate() {
            out[k] += alpha * dir[u];
        }
        out
    }
}

/// Solves from the constant initial guess `f ≡ boundary_value`.
pub fn solve_dirichlet(
    grid: &DomainGrid,
    boundary_value: f64,
    h: f64,
    params: &SpaceParams,
    cfg: &SolverConfig,
) -> Result<GraphSolution> {
    solve_dirichlet_from(grid, boundary_value, h, params, cfg, None)
}

/// Solves starting from `initial` nodal values (boundary entries are overwritten).
pub fn solve_dirichlet_from(
    grid: &DomainGrid,
    boundary_value: f64,
    h: f64,
    params: &SpaceParams,
    cfg: &SolverConfig,
    initial: Option<&[f64]>,
) -> Result<GraphSolution> {
    cfg.validate()?;
    params.require_nonpositive_kappa()?;
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::InvalidConfig(format!("target mean curvature must be >= 0, got {h}")));
    }
    if !boundary_value.is_finite() {
        return Err(Error::InvalidConfig("boundary value must be finite".into()));
    }
    grid.check_inside(params)?;

    // iterate on u = f − boundary_value so short cut-cell arms, whose weights are
    // large, never difference two large nearly equal heights
    let mut values: Vec<f64> = match initial {
        Some(v) if v.len() == grid.len() => v.iter().map(|f| f - boundary_value).collect(),
        Some(v) => {
            return Err(Error::InvalidConfig(format!(
                "initial guess has {} values, grid has {}",
                v.len(),
                grid.len()
            )))
        }
        None => vec![0.0; grid.len()],
    };
    for k in 0..grid.len() {
        if !grid.is_interior(k) {
            values[k] = 0.0;
        }
    }

    let problem = Problem::new(grid, params, h, cfg)?;
    let finish = |values: Vec<f64>, ev: &Evaluation, iterations: usize| GraphSolution {
        grid: grid.clone(),
        values: values.iter().map(|u| u + boundary_value).collect(),
        params: *params,
        h_target: h,
        boundary_value,
        orientation: cfg.orientation,
        residual_max: ev.max_abs,
        converged: true,
        iterations,
        min_abs_nu: ev.min_abs_nu,
        max_sigma_interior: ev.max_sigma,
        blowup_threshold: cfg.blowup_nu,
    };

    let mut ev = problem.evaluate(&values).ok_or(Error::VerticalBlowup { iterations: 0, min_abs_nu: 0.0 })?;
    if ev.min_abs_nu < cfg.blowup_nu {
        return Err(Error::VerticalBlowup { iterations: 0, min_abs_nu: ev.min_abs_nu });
    }
    let zero_shift = vec![0.0; ev.residual.len()];
    let mut iterations = 0;

    // damped Newton
    let mut stalled = false;
    while iterations < cfg.max_newton {
        if ev.max_abs <= cfg.tol_residual {
            return Ok(finish(values, &ev, iterations));
        }
        iterations += 1;
        let dir = match problem.newton_direction(&values, &ev.residual, &zero_shift) {
            Ok(d) => d,
            Err(_) => {
                stalled = true;
                break;
            }
        };
        let mut alpha = cfg.damping;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial = problem.apply_step(&values, &dir, alpha);
            if let Some(tev) = problem.evaluate(&trial) {
                let decrease = tev.norm2 <= (1.0 - 1e-4 * alpha) * ev.norm2 || tev.max_abs <= cfg.tol_residual;
                if tev.min_abs_nu >= cfg.blowup_nu && decrease {
                    accepted = Some((trial, tev));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((v, e)) => {
                values = v;
                ev = e;
            }
            None => {
                stalled = true;
                break;
            }
        }
    }
    if ev.max_abs <= cfg.tol_residual {
        return Ok(finish(values, &ev, iterations));
    }
    if !stalled && cfg.max_pseudo_steps == 0 {
        return Err(Error::NonConvergence { iterations, residual: ev.max_abs });
    }

    // pseudo-transient continuation: (J + D/Δt) δ = −r
    // implicit Euler on u_t = ±r with unit mass; the sign follows the Jacobian
    // diagonal so the shift always strengthens it
    let diag_scale: Vec<f64> = problem.jacobian_entries(&values)?.1.iter().map(|d| if *d < 0.0 { -1.0 } else { 1.0 }).collect();
    let dt0 = 1e-2;
    let mut dt = dt0;
    let mut pseudo = 0;
    while pseudo < cfg.max_pseudo_steps {
        if ev.max_abs <= cfg.tol_residual {
            return Ok(finish(values, &ev, iterations));
        }
        pseudo += 1;
        iterations += 1;
        let shift: Vec<f64> = diag_scale.iter().map(|d| d / dt).collect();
        let dir = problem.newton_direction(&values, &ev.residual, &shift)?;
        let trial = problem.apply_step(&values, &dir, 1.0);
        match problem.evaluate(&trial) {
            Some(tev) if tev.min_abs_nu >= cfg.blowup_nu => {
                // grow Δt on every accepted step, faster while the residual drops; a
                // flow with no steady state then keeps rising until the graph turns vertical
                let ratio = if tev.norm2 > 0.0 { ev.norm2 / tev.norm2 } else { 10.0 };
                dt = (dt * ratio.clamp(1.2, 10.0)).min(1e12);
                values = trial;
                ev = tev;
            }
            Some(tev) if dt <= dt0 => {
                return Err(Error::VerticalBlowup { iterations, min_abs_nu: tev.min_abs_nu });
            }
            None if dt <= dt0 => {
                return Err(Error::VerticalBlowup { iterations, min_abs_nu: 0.0 });
            }
            _ => dt = (0.25 * dt).max(dt0),
        }
    }
    if ev.max_abs <= cfg.tol_residual {
        return Ok(finish(values, &ev, iterations));
    }
    Err(Error::NonConvergence { iterations, residual: ev.max_abs })
}

/// Maximum vertical distance of the graph from its boundary section.
pub fn graph_height(sol: &GraphSolution) -> Result<f64> {
    if !sol.converged {
        return Err(Error::NotConverged);
    }
    Ok(sol
        .values
        .iter()
        .fold(0.0_f64, |m, v| m.max((v - sol.boundary_value).abs())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepOutcome {
    Converged(Box<GraphSolution>),
    Failed { mode: FailureMode, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub h: f64,
    pub outcome: StepOutcome,
}

impl ContinuationStep {
    pub fn solution(&self) -> Option<&GraphSolution> {
        match &self.outcome {
            StepOutcome::Converged(s) => Some(s),
            StepOutcome::Failed { .. } => None,
        }
    }

    pub fn failure(&self) -> Option<FailureMode> {
        match &self.outcome {
            StepOutcome::Converged(_) => None,
            StepOutcome::Failed { mode, .. } => Some(*mode),
        }
    }
}

/// Warm-started sweep over `steps + 1` equally spaced values in `[h_min, h_max]`.
/// Failures are recorded and the sweep continues from the last converged solution.
pub fn continuation_in_h(
    grid: &DomainGrid,
    boundary_value: f64,
    h_min: f64,
    h_max: f64,
    steps: usize,
    params: &SpaceParams,
    cfg: &SolverConfig,
) -> Result<Vec<ContinuationStep>> {
    if !(h_min >= 0.0 && h_min < h_max) {
        return Err(Error::InvalidConfig(format!("need 0 <= H_min < H_max, got [{h_min}, {h_max}]")));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig("continuation needs at least one step".into()));
    }
    let mut out = Vec::with_capacity(steps + 1);
    let mut warm: Option<Vec<f64>> = None;
    for i in 0..=steps {
        let h = h_min + (h_max - h_min) * i as f64 / steps as f64;
        let outcome = match solve_dirichlet_from(grid, boundary_value, h, params, cfg, warm.as_deref()) {
            Ok(sol) => {
                warm = Some(sol.values.clone());
                StepOutcome::Converged(Box::new(sol))
            }
            Err(e) => StepOutcome::Failed { mode: FailureMode::of(&e), message: e.to_string() },
        };
        out.push(ContinuationStep { h, outcome });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBin {
    pub distance_lo: f64,
    pub distance_hi: f64,
    /// Largest `|σ|` among interior nodes in the bin; `None` for empty bins.
    pub max_sigma: Option<f64>,
}

pub const SIGMA_BINS: usize = 10;

/// Interior nodes binned by base distance to the boundary, with the largest `|σ|` per bin.
pub fn sigma_profile(sol: &GraphSolution) -> Result<Vec<SigmaBin>> {
    if !sol.converged {
        return Err(Error::NotConverged);
    }
    let grid = &sol.grid;
    let mut samples = Vec::with_capacity(grid.interior_nodes().len());
    for &k in grid.interior_nodes() {
        let d = grid.boundary_distance(k, &sol.params);
        samples.push((d, sol.shape_at(k)?.sigma_sq.sqrt()));
    }
    let d_max = samples.iter().fold(0.0_f64, |m, s| m.max(s.0));
    let width = d_max / SIGMA_BINS as f64;
    let mut bins: Vec<SigmaBin> = (0..SIGMA_BINS)
        .map(|b| SigmaBin {
            distance_lo: b as f64 * width,
            distance_hi: (b + 1) as f64 * width,
            max_sigma: None,
        })
        .collect();
    for (d, s) in samples {
        let b = ((d / width) as usize).min(SIGMA_BINS - 1);
        let slot = &mut bins[b].max_sigma;
        *slot = Some(slot.map_or(s, |m: f64| m.max(s)));
    }
    Ok(bins)
}
