//! Jacobi (stability) operator `−(Δ_M + q)` of solved graphs and of CMC cylinders,
//! and its smallest eigenvalue.
//!
//! Graph operators are assembled with bilinear elements on the lattice cells of
//! the solution grid, in the parameter domain: the weak Laplacian of the induced
//! metric `I` is `∫ ∇φᵀ (√det I · I⁻¹) ∇ψ dx dy`, with the coefficient interpolated
//! bilinearly from the nodes, and the mass is lumped. Dirichlet conditions hold on
//! the boundary of the union of lattice cells that lie inside the domain.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{potential_from, ShapeData};
use crate::model::SpaceParams;
use crate::rotational::{cmc_cylinder_curve, PlanarCircle};
use crate::small::{det2, inv2, Mat2};
use crate::solver::GraphSolution;

pub const RESIDUAL_REGION: f64 = 0.25;
pub const EIGEN_TOL: f64 = 1e-10;
pub const EIGEN_MAX_ITERATIONS: usize = 5000;
const EIGEN_SEED: u64 = 0x6a61_636f_6269;

/// Symmetric generalized eigenproblem `matrix · x = λ · diag(mass) · x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOperator {
    pub dimension: usize,
    /// Grid node behind each unknown (empty for operators not built on a grid).
    pub nodes: Vec<usize>,
    /// `(row, col, value)`, sorted, one entry per position, both triangles stored.
    pub entries: Vec<(usize, usize, f64)>,
    pub mass: Vec<f64>,
    pub potential: Vec<f64>,
}

impl DiscreteOperator {
    fn from_parts(nodes: Vec<usize>, mut raw: Vec<(usize, usize, f64)>, mass: Vec<f64>, potential: Vec<f64>) -> Self {
        let dimension = mass.len();
        raw.sort_by_key(|e| (e.0, e.1));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(raw.len());
        for (i, j, v) in raw {
            match entries.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => entries.push((i, j, v)),
            }
        }
        DiscreteOperator { dimension, nodes, entries, mass, potential }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
            .map_or(0.0, |k| self.entries[k].2)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dimension];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    /// `max |a_ij − a_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| (v - self.entry(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// `xᵀ·matrix·x`, the discrete `∫|∇f|² − q f²`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        let norm: f64 = x.iter().zip(&self.mass).map(|(v, m)| m * v * v).sum();
        self.quadratic_form(x) / norm
    }

    /// Operator for the potential `q + c`, that is `matrix − c·mass`.
    pub fn with_potential_shift(&self, c: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            if e.0 == e.1 {
                e.2 -= c * out.mass[e.0];
            }
        }
        for q in &mut out.potential {
            *q += c;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub lambda_min: f64,
    /// `‖Bx − λx‖ / max(|λ|, 1)` for the unit eigenvector of `B = M^{-1/2} A M^{-1/2}`.
    pub eigvec_residual: f64,
    pub iterations: usize,
}

/// Metric data of a graph at one node.
struct NodeMetric {
    /// `√det I · I⁻¹`
    coeff: Mat2,
    area: f64,
}

fn node_metric(sd: &ShapeData) -> Result<NodeMetric> {
    let det = det2(&sd.first_form);
    if !(det > 0.0) {
        return Err(Error::DegenerateMetric(det));
    }
    let inv = inv2(&sd.first_form);
    let area = det.sqrt();
    Ok(NodeMetric { coeff: [[area * inv[0][0], area * inv[0][1]], [area * inv[1][0], area * inv[1][1]]], area })
}

/// Weak form of `−(Δ_M + q)` with Dirichlet conditions, on the lattice cells inside the domain.
pub fn assemble_jacobi(sol: &GraphSolution) -> Result<DiscreteOperator> {
    if !sol.converged {
        return Err(Error::NotConverged);
    }
    let grid = &sol.grid;
    let layout = grid.layout();
    let (nx, ny, hx, hy) = (layout.nx, layout.ny, layout.hx, layout.hy);
    let cell = |i: usize, j: usize| -> Option<[usize; 4]> {
        if i + 1 >= nx || j + 1 >= ny {
            return None;
        }
        Some([
            grid.lattice_node(i, j)?,
            grid.lattice_node(i + 1, j)?,
            grid.lattice_node(i + 1, j + 1)?,
            grid.lattice_node(i, j + 1)?,
        ])
    };

    let mut unknown = vec![None; grid.len()];
    let mut nodes = Vec::new();
    for j in 1..ny.saturating_sub(1) {
        for i in 1..nx.saturating_sub(1) {
            let Some(k) = grid.lattice_node(i, j) else { continue };
            let surrounded = [(i - 1, j - 1), (i, j - 1), (i, j), (i - 1, j)].iter().all(|&(a, b)| cell(a, b).is_some());
            if grid.is_interior(k) && surrounded {
                unknown[k] = Some(nodes.len());
                nodes.push(k);
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::InvalidGrid("no interior cells for the stability operator".into()));
    }

    let mut metric: Vec<Option<NodeMetric>> = (0..grid.len()).map(|_| None).collect();
    let mut metric_at = |k: usize| -> Result<(Mat2, f64)> {
        if metric[k].is_none() {
            metric[k] = Some(node_metric(&sol.shape_at(k)?)?);
        }
        let m = metric[k].as_ref().expect("just filled");
        Ok((m.coeff, m.area))
    };

    // bilinear basis on the unit cell, corners (0,0), (1,0), (1,1), (0,1)
    let g = 0.5 / 3.0_f64.sqrt();
    let gauss = [0.5 - g, 0.5 + g];
    let basis = |s: f64, t: f64| [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
    let grad = |s: f64, t: f64| {
        [
            [-(1.0 - t) / hx, -(1.0 - s) / hy],
            [(1.0 - t) / hx, -s / hy],
            [t / hx, s / hy],
            [-t / hx, (1.0 - s) / hy],
        ]
    };

    let mut raw = Vec::new();
    let mut mass = vec![0.0; nodes.len()];
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            let Some(corners) = cell(i, j) else { continue };
            if corners.iter().all(|&k| unknown[k].is_none()) {
                continue;
            }
            let data = [metric_at(corners[0])?, metric_at(corners[1])?, metric_at(corners[2])?, metric_at(corners[3])?];
            for &s in &gauss {
                for &t in &gauss {
                    let w = 0.25 * hx * hy;
                    let n = basis(s, t);
                    let dn = grad(s, t);
                    let mut a = [[0.0; 2]; 2];
                    let mut area = 0.0;
                    for c in 0..4 {
                        for p in 0..2 {
                            for q in 0..2 {
                                a[p][q] += n[c] * data[c].0[p][q];
                            }
                        }
                        area += n[c] * data[c].1;
                    }
                    for (ca, &ka) in corners.iter().enumerate() {
                        let Some(ua) = unknown[ka] else { continue };
                        mass[ua] += w * n[ca] * area;
                        for (cb, &kb) in corners.iter().enumerate() {
                            let Some(ub) = unknown[kb] else { continue };
                            let ga = dn[ca];
                            let gb = dn[cb];
                            let v = ga[0] * (a[0][0] * gb[0] + a[0][1] * gb[1]) + ga[1] * (a[1][0] * gb[0] + a[1][1] * gb[1]);
                            raw.push((ua, ub, w * v));
                        }
                    }
                }
            }
        }
    }

    let mut potential = Vec::with_capacity(nodes.len());
    for (u, &k) in nodes.iter().enumerate() {
        let q = potential_from(&sol.shape_at(k)?, &sol.params);
        potential.push(q);
        raw.push((u, u, -q * mass[u]));
    }
    Ok(DiscreteOperator::from_parts(nodes, raw, mass, potential))
}

fn sparse(n: usize, entries: &[(usize, usize, f64)], scale: &[f64], shift: f64) -> Result<SparseColMat<usize, f64>> {
    let mut trip: Vec<Triplet<usize, usize, f64>> =
        entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v * scale[i] * scale[j])).collect();
    if shift != 0.0 {
        trip.extend((0..n).map(|i| Triplet::new(i, i, -shift)));
    }
    SparseColMat::try_new_from_triplets(n, n, &trip).map_err(|e| Error::LinearSolve(format!("{e:?}")))
}

/// Smallest generalized eigenvalue by shifted inverse iteration. The shift starts
/// below the Gershgorin bound and is only ever raised to a value where `B − σI`
/// still admits a Cholesky factorization, so it stays below the lowest eigenvalue
/// and the iteration cannot lock onto a higher one.
pub fn smallest_eigenvalue(op: &DiscreteOperator) -> Result<SpectrumReport> {
    let n = op.dimension;
    if n == 0 {
        return Err(Error::InvalidGrid("empty operator".into()));
    }
    if op.mass.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::InvalidGrid("mass entries must be positive".into()));
    }
    let scale: Vec<f64> = op.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let scaled: Vec<(usize, usize, f64)> = op.entries.iter().map(|&(i, j, v)| (i, j, v * scale[i] * scale[j])).collect();
    let apply_b = |x: &[f64]| {
        let mut y = vec![0.0; n];
        for &(i, j, v) in &scaled {
            y[i] += v * x[j];
        }
        y
    };

    let mut radius = vec![0.0; n];
    let mut diag = vec![0.0; n];
    for &(i, j, v) in &scaled {
        if i == j {
            diag[i] += v;
        } else {
            radius[i] += v.abs();
        }
    }
    let gershgorin = (0..n).map(|i| diag[i] - radius[i]).fold(f64::INFINITY, f64::min);
    let spread = (0..n).map(|i| diag[i].abs() + radius[i]).fold(1.0, f64::max);
    let mut sigma = gershgorin - 1e-6 * spread;
    let mut factor = sparse(n, &op.entries, &scale, sigma)?
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(EIGEN_SEED);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    normalize(&mut x);
    let mut rho = f64::NAN;
    for it in 1..=EIGEN_MAX_ITERATIONS {
        let rhs = Col::<f64>::from_fn(n, |i| x[i]);
        let y = factor.solve(&rhs);
        x = (0..n).map(|i| y[i]).collect();
        normalize(&mut x);
        let bx = apply_b(&x);
        rho = bx.iter().zip(&x).map(|(a, b)| a * b).sum();
        let r: f64 = bx.iter().zip(&x).map(|(a, b)| (a - rho * b).powi(2)).sum::<f64>().sqrt();
        let residual = r / rho.abs().max(1.0);
        if residual < EIGEN_TOL {
            return Ok(SpectrumReport { lambda_min: rho, eigvec_residual: residual, iterations: it });
        }
        // an eigenvalue lies within r of rho; move the shift up under the PD guard
        let candidate = rho - 2.0 * r - 1e-9 * spread;
        if candidate > sigma + 1e-3 * (rho - sigma).abs() {
            if let Ok(f) = sparse(n, &op.entries, &scale, candidate)?.sp_cholesky(Side::Lower) {
                sigma = candidate;
                factor = f;
            }
        }
    }
    if !rho.is_finite() {
        return Err(Error::LinearSolve("eigen-iteration produced a non-finite value".into()));
    }
    Err(Error::IterationLimit(EIGEN_MAX_ITERATIONS))
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in x {
        *v /= norm;
    }
}

/// Residual `Δ_M ν + q ν` of the nodal angle function at interior nodes, in strong
/// form on the grid stencils: `Δ_M ν = ρ⁻¹ [∂_a(A^{ab}) ∂_b ν + A^{ab} ∂_ab ν]` with
/// `A = ρ I⁻¹`, `ρ = √det I`. Returned as `(node, residual)` pairs.
pub fn angle_jacobi_residuals(sol: &GraphSolution) -> Result<Vec<(usize, f64)>> {
    if !sol.converged {
        return Err(Error::NotConverged);
    }
    let grid = &sol.grid;
    let n = grid.len();
    let mut nu = vec![0.0; n];
    let mut axx = vec![0.0; n];
    let mut axy = vec![0.0; n];
    let mut ayy = vec![0.0; n];
    let mut area = vec![0.0; n];
    for k in 0..n {
        let sd = sol.shape_at(k)?;
        let m = node_metric(&sd)?;
        nu[k] = sd.nu;
        axx[k] = m.coeff[0][0];
        axy[k] = m.coeff[0][1];
        ayy[k] = m.coeff[1][1];
        area[k] = m.area;
    }
    let mut out = Vec::with_capacity(grid.interior_nodes().len());
    for &k in grid.interior_nodes() {
        let st = grid.stencil(k);
        let [nx_, ny_, nxx, nxy, nyy] = st.apply(&nu);
        let [dxx_x, _, _, _, _] = st.apply(&axx);
        let [dxy_x, dxy_y, _, _, _] = st.apply(&axy);
        let [_, dyy_y, _, _, _] = st.apply(&ayy);
        let lap = ((dxx_x + dxy_y) * nx_ + (dxy_x + dyy_y) * ny_ + axx[k] * nxx + 2.0 * axy[k] * nxy + ayy[k] * nyy) / area[k];
        let q = potential_from(&sol.shape_at(k)?, &sol.params);
        out.push((k, lap + q * nu[k]));
    }
    Ok(out)
}

/// Largest angle-function residual over the interior nodes whose base distance to the
/// boundary is at least a quarter of the largest such distance. The region is fixed
/// under refinement; nodes near the cut cells carry first-order jets and the residual
/// takes three derivatives of the solution, so they stay out of the measurement.
pub fn angle_jacobi_residual(sol: &GraphSolution) -> Result<f64> {
    let residuals = angle_jacobi_residuals(sol)?;
    let dist: Vec<f64> = residuals.iter().map(|&(k, _)| sol.grid.boundary_distance(k, &sol.params)).collect();
    let reach = dist.iter().fold(0.0_f64, |m, d| m.max(*d));
    Ok(residuals
        .iter()
        .zip(&dist)
        .filter(|(_, d)| **d >= RESIDUAL_REGION * reach)
        .fold(0.0_f64, |m, ((_, r), _)| m.max(r.abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderStability {
    /// `4H² + κ ≤ 0`
    pub stable: bool,
    /// `−(4H² + κ)`
    pub margin: f64,
    pub curve: PlanarCircle,
    /// Constant-mode Rayleigh quotient of the tube operator, `−(4H² + κ)`.
    pub constant_mode: f64,
    /// Smallest eigenvalue of the discretized tube operator.
    pub spectral_lambda_min: f64,
    pub tube_length: f64,
}

pub const TUBE_CELLS_AROUND: usize = 32;
pub const TUBE_CELLS_ALONG: usize = 64;

/// Stability of the vertical cylinder over the circle of geodesic curvature `2H`.
/// The cylinder is flat with Jacobi potential `κ_γ² + κ = 4H² + κ`; the criterion is
/// cross-checked on a tube of length `20/(2H)`, periodic around and Neumann at the ends.
pub fn cylinder_stability(h: f64, params: &SpaceParams) -> Result<CylinderStability> {
    let curve = cmc_cylinder_curve(h, params)?;
    let c = 4.0 * h * h + params.kappa();
    let tube_length = 20.0 / (2.0 * h);
    let around = match curve.radius {
        Some(rho) if params.kappa() < 0.0 => {
            let s = (-params.kappa()).sqrt();
            2.0 * std::f64::consts::PI * (s * rho).sinh() / s
        }
        Some(rho) => 2.0 * std::f64::consts::PI * rho,
        // an open curve: a periodic stretch as long as the tube
        None => tube_length,
    };
    let op = flat_tube_operator(around, tube_length, c);
    let ones = vec![1.0; op.dimension];
    let constant_mode = op.rayleigh_quotient(&ones);
    let spectral = smallest_eigenvalue(&op)?;
    Ok(CylinderStability {
        stable: c <= 0.0,
        margin: 0.0 - c,
        curve,
        constant_mode,
        spectral_lambda_min: spectral.lambda_min,
        tube_length,
    })
}

/// Finite-volume `−Δ − c` on the flat rectangle `[0, around) × [0, along]`, periodic in
/// the first direction and Neumann in the second, cell-centred.
pub fn flat_tube_operator(around: f64, along: f64, c: f64) -> DiscreteOperator {
    let (na, nb) = (TUBE_CELLS_AROUND, TUBE_CELLS_ALONG);
    let (ha, hb) = (around / na as f64, along / nb as f64);
    let idx = |i: usize, j: usize| i + na * j;
    let cell_area = ha * hb;
    let mut raw = Vec::new();
    for j in 0..nb {
        for i in 0..na {
            let k = idx(i, j);
            let mut couple = |m: usize, w: f64| {
                raw.push((k, k, w));
                raw.push((k, m, -w));
            };
            // flux across each face: face length / centre distance
            couple(idx((i + 1) % na, j), hb / ha);
            couple(idx((i + na - 1) % na, j), hb / ha);
            if j + 1 < nb {
                couple(idx(i, j + 1), ha / hb);
            }
            if j > 0 {
                couple(idx(i, j - 1), ha / hb);
            }
            raw.push((k, k, -c * cell_area));
        }
    }
    DiscreteOperator::from_parts(Vec::new(), raw, vec![cell_area; na * nb], vec![c; na * nb])
}
