//! Lattices over planar domains and the finite-difference jet stencils on them.
//!
//! Both shapes use a uniform Cartesian lattice with `n` cells per side (of the
//! bounding square for disks). On disks, lattice nodes outside the circle are
//! dropped; an arm of an interior stencil that leaves the disk ends instead at a
//! cut node on the circle, and the three-point differences along that arm use the
//! shortened spacing. Interior jets are second order away from the circle and
//! first order in the cut cells, which keeps the solution error O(h²).

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Jet2;
use crate::model::SpaceParams;

/// Smallest admissible lattice resolution.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainShape {
    Rectangle { center: [f64; 2], half_extents: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
}

impl DomainShape {
    pub fn disk(radius: f64) -> Self {
        DomainShape::Disk { center: [0.0, 0.0], radius }
    }

    pub fn square(side: f64) -> Self {
        DomainShape::Rectangle {
            center: [0.5 * side, 0.5 * side],
            half_extents: [0.5 * side, 0.5 * side],
        }
    }
}

/// Serializable descriptor a [`DomainGrid`] is rebuilt from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub shape: DomainShape,
    /// Cells per side (of the bounding square for disks).
    pub n: usize,
}

/// Lattice dimensions: `nx × ny` points with spacings `hx`, `hy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

/// Weights of one node in the five derivative stencils `fx, fy, fxx, fxy, fyy`.
pub type StencilWeights = [f64; 5];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JetStencil {
    pub terms: Vec<(usize, StencilWeights)>,
}

impl JetStencil {
    fn add(&mut self, node: usize, component: usize, weight: f64) {
        if weight == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|(n, _)| *n == node) {
            Some((_, w)) => w[component] += weight,
            None => {
                let mut w = [0.0; 5];
                w[component] = weight;
                self.terms.push((node, w));
            }
        }
    }

    fn add_scaled(&mut self, other: &[(usize, f64)], component: usize, scale: f64) {
        for &(node, w) in other {
            self.add(node, component, scale * w);
        }
    }

    /// Applies the stencil to nodal values: `[fx, fy, fxx, fxy, fyy]`.
    pub fn apply(&self, values: &[f64]) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (node, w) in &self.terms {
            let v = values[*node];
            for c in 0..5 {
                out[c] += w[c] * v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct DomainGrid {
    spec: GridSpec,
    layout: Layout,
    spacing: f64,
    positions: Vec<[f64; 2]>,
    /// Node at lattice index `i + nx·j`, `None` where the lattice point is outside.
    lattice: Vec<Option<usize>>,
    mask: Vec<bool>,
    unknown_of: Vec<Option<usize>>,
    interior_nodes: Vec<usize>,
    stencils: Vec<JetStencil>,
}

impl From<DomainGrid> for GridSpec {
    fn from(g: DomainGrid) -> Self {
        g.spec
    }
}

impl TryFrom<GridSpec> for DomainGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        DomainGrid::new(spec.shape, spec.n)
    }
}

impl DomainGrid {
    pub fn new(shape: DomainShape, n: usize) -> Result<Self> {
        if n < MIN_CELLS {
            return Err(Error::InvalidGrid(format!("n = {n} is below the minimum {MIN_CELLS}")));
        }
        match shape {
            DomainShape::Rectangle { center, half_extents } => {
                if !(half_extents[0] > 0.0 && half_extents[1] > 0.0) {
                    return Err(Error::InvalidGrid("rectangle extents must be positive".into()));
                }
                Ok(Self::cartesian(GridSpec { shape, n }, center, half_extents))
            }
            DomainShape::Disk { center, radius } => {
                if !(radius > 0.0) {
                    return Err(Error::InvalidGrid("disk radius must be positive".into()));
                }
                if !n.is_multiple_of(2) {
                    return Err(Error::InvalidGrid(format!("disk lattices need an even n, got {n}")));
                }
                Ok(Self::disk_lattice(GridSpec { shape, n }, center, radius))
            }
        }
    }

    fn cartesian(spec: GridSpec, center: [f64; 2], half: [f64; 2]) -> Self {
        let n = spec.n;
        let (nx, ny) = (n + 1, n + 1);
        let hx = 2.0 * half[0] / n as f64;
        let hy = 2.0 * half[1] / n as f64;
        let idx = |i: usize, j: usize| i + nx * j;
        let mut positions = Vec::with_capacity(nx * ny);
        let mut mask = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                positions.push([
                    center[0] - half[0] + i as f64 * hx,
                    center[1] - half[1] + j as f64 * hy,
                ]);
                mask.push(i > 0 && j > 0 && i < n && j < n);
            }
        }

        // first derivative along one axis: centered inside, one-sided at the ends
        let d1 = |k: usize, last: usize, h: f64| -> Vec<(usize, f64)> {
            if k == 0 {
                vec![(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)]
            } else if k == last {
                vec![(last, 1.5 / h), (last - 1, -2.0 / h), (last - 2, 0.5 / h)]
            } else {
                vec![(k + 1, 0.5 / h), (k - 1, -0.5 / h)]
            }
        };

        let mut stencils = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let mut s = JetStencil::default();
                for (ii, w) in d1(i, n, hx) {
                    s.add(idx(ii, j), 0, w);
                }
                for (jj, w) in d1(j, n, hy) {
                    s.add(idx(i, jj), 1, w);
                }
                if mask[idx(i, j)] {
                    s.add(idx(i + 1, j), 2, 1.0 / (hx * hx));
                    s.add(idx(i, j), 2, -2.0 / (hx * hx));
                    s.add(idx(i - 1, j), 2, 1.0 / (hx * hx));
                    s.add(idx(i, j + 1), 4, 1.0 / (hy * hy));
                    s.add(idx(i, j), 4, -2.0 / (hy * hy));
                    s.add(idx(i, j - 1), 4, 1.0 / (hy * hy));
                    let q = 0.25 / (hx * hy);
                    s.add(idx(i + 1, j + 1), 3, q);
                    s.add(idx(i - 1, j - 1), 3, q);
                    s.add(idx(i + 1, j - 1), 3, -q);
                    s.add(idx(i - 1, j + 1), 3, -q);
                }
                stencils.push(s);
            }
        }
        let lattice = (0..nx * ny).map(Some).collect();
        Self::finish(spec, Layout { nx, ny, hx, hy }, hx.max(hy), positions, lattice, mask, stencils)
    }

    fn disk_lattice(spec: GridSpec, center: [f64; 2], radius: f64) -> Self {
        let n = spec.n;
        let nx = n + 1;
        let h = 2.0 * radius / n as f64;
        let snap = ON_CIRCLE_TOLERANCE * h;
        let lattice_pos = |i: usize, j: usize| [center[0] - radius + i as f64 * h, center[1] - radius + j as f64 * h];

        let mut positions = Vec::new();
        let mut mask = Vec::new();
        let mut lattice = vec![None; nx * nx];
        for j in 0..nx {
            for i in 0..nx {
                let p = lattice_pos(i, j);
                let gap = radius - (p[0] - center[0]).hypot(p[1] - center[1]);
                if gap >= -snap {
                    lattice[i + nx * j] = Some(positions.len());
                    positions.push(p);
                    mask.push(gap > snap);
                }
            }
        }

        // arms along ±x, ±y and both diagonals; a missing neighbour is replaced by
        // the point where the arm crosses the circle, carrying the boundary value
        const DIRS: [[isize; 2]; 8] = [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1], [1, -1], [-1, 1]];
        let lattice_nodes = positions.len();
        let mut arms = vec![[(0usize, 1.0f64); 8]; lattice_nodes];
        for j in 0..nx {
            for i in 0..nx {
                let Some(k) = lattice[i + nx * j] else { continue };
                if !mask[k] {
                    continue;
                }
                let p = positions[k];
                for (a, d) in DIRS.iter().enumerate() {
                    let (ii, jj) = (i as isize + d[0], j as isize + d[1]);
                    let neighbour = (ii >= 0 && jj >= 0 && (ii as usize) < nx && (jj as usize) < nx)
                        .then(|| lattice[ii as usize + nx * jj as usize])
                        .flatten();
                    arms[k][a] = match neighbour {
                        Some(m) => (m, 1.0),
                        None => {
                            let step = [d[0] as f64 * h, d[1] as f64 * h];
                            let t = circle_crossing(p, step, center, radius);
                            positions.push([p[0] + t * step[0], p[1] + t * step[1]]);
                            mask.push(false);
                            (positions.len() - 1, t)
                        }
                    };
                }
            }
        }

        let mut stencils = vec![JetStencil::default(); positions.len()];
        for k in 0..lattice_nodes {
            if !mask[k] {
                continue;
            }
            let arm = &arms[k];
            let s = &mut stencils[k];
            let (dx, dxx) = three_point(k, arm[1], arm[0], h);
            let (dy, dyy) = three_point(k, arm[3], arm[2], h);
            let (_, d11) = three_point(k, arm[5], arm[4], h * std::f64::consts::SQRT_2);
            let (_, d12) = three_point(k, arm[7], arm[6], h * std::f64::consts::SQRT_2);
            s.add_scaled(&dx, 0, 1.0);
            s.add_scaled(&dy, 1, 1.0);
            s.add_scaled(&dxx, 2, 1.0);
            // second derivatives along (1,1)/√2 and (1,−1)/√2 differ by 2 fxy
            s.add_scaled(&d11, 3, 0.5);
            s.add_scaled(&d12, 3, -0.5);
            s.add_scaled(&dyy, 4, 1.0);
        }
        for k in 0..positions.len() {
            if !mask[k] {
                stencils[k] = least_squares_gradient(k, &positions, h);
            }
        }
        Self::finish(spec, Layout { nx, ny: nx, hx: h, hy: h }, h, positions, lattice, mask, stencils)
    }

    fn finish(
        spec: GridSpec,
        layout: Layout,
        spacing: f64,
        positions: Vec<[f64; 2]>,
        lattice: Vec<Option<usize>>,
        mask: Vec<bool>,
        stencils: Vec<JetStencil>,
    ) -> Self {
        let mut unknown_of = vec![None; positions.len()];
        let mut interior_nodes = Vec::new();
        for (k, &inside) in mask.iter().enumerate() {
            if inside {
                unknown_of[k] = Some(interior_nodes.len());
                interior_nodes.push(k);
            }
        }
        DomainGrid { spec, layout, spacing, positions, lattice, mask, unknown_of, interior_nodes, stencils }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn shape(&self) -> DomainShape {
        self.spec.shape
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Lattice spacing `h`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, node: usize) -> [f64; 2] {
        self.positions[node]
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// Node at lattice position `(i, j)`; `None` outside the lattice or the disk.
    /// Cut nodes on a circle are not lattice nodes.
    pub fn lattice_node(&self, i: usize, j: usize) -> Option<usize> {
        let Layout { nx, ny, .. } = self.layout;
        if i < nx && j < ny {
            self.lattice[i + nx * j]
        } else {
            None
        }
    }

    /// Interior mask; `false` marks Dirichlet boundary nodes.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.mask[node]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn unknown_of(&self, node: usize) -> Option<usize> {
        self.unknown_of[node]
    }

    /// Interior nodes carry full second-order stencils; boundary nodes carry
    /// one-sided first-derivative stencils only.
    pub fn stencil(&self, node: usize) -> &JetStencil {
        &self.stencils[node]
    }

    pub fn jet(&self, node: usize, values: &[f64]) -> Jet2 {
        let [x, y] = self.positions[node];
        let [fx, fy, fxx, fxy, fyy] = self.stencils[node].apply(values);
        Jet2 { x, y, f: values[node], fx, fy, fxx, fxy, fyy }
    }

    /// Every node must lie strictly inside the model domain of `params`.
    pub fn check_inside(&self, params: &SpaceParams) -> Result<()> {
        for p in &self.positions {
            params.check_xy(p[0], p[1])?;
        }
        Ok(())
    }

    /// Planar distance from `node` to the domain boundary, measured in the base
    /// metric `λ|dx|` along the shortest straight coordinate segment.
    pub fn boundary_distance(&self, node: usize, params: &SpaceParams) -> f64 {
        let p = self.positions[node];
        match self.spec.shape {
            DomainShape::Disk { center, radius } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let r = d[0].hypot(d[1]);
                let dir = if r > 0.0 { [d[0] / r, d[1] / r] } else { [1.0, 0.0] };
                let end = [center[0] + radius * dir[0], center[1] + radius * dir[1]];
                base_length(p, end, params)
            }
            DomainShape::Rectangle { center, half_extents } => {
                let lo = [center[0] - half_extents[0], center[1] - half_extents[1]];
                let hi = [center[0] + half_extents[0], center[1] + half_extents[1]];
                [
                    [lo[0], p[1]],
                    [hi[0], p[1]],
                    [p[0], lo[1]],
                    [p[0], hi[1]],
                ]
                .iter()
                .map(|&e| base_length(p, e, params))
                .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Nodes within this fraction of `h` from the circle count as lying on it.
const ON_CIRCLE_TOLERANCE: f64 = 1e-8;

/// Parameter `t ∈ (0, 1]` where `p + t·step` meets the circle, `p` inside.
fn circle_crossing(p: [f64; 2], step: [f64; 2], center: [f64; 2], radius: f64) -> f64 {
    let q = [p[0] - center[0], p[1] - center[1]];
    let a = step[0] * step[0] + step[1] * step[1];
    let b = q[0] * step[0] + q[1] * step[1];
    let c = q[0] * q[0] + q[1] * q[1] - radius * radius;
    let t = (-b + (b * b - a * c).sqrt()) / a;
    t.clamp(f64::MIN_POSITIVE, 1.0)
}

/// First and second derivative weights at node `k` from the quadratic through the
/// arm points `−t_m·h`, `0`, `t_p·h`; centered differences when both arms are 1.
fn three_point(k: usize, minus: (usize, f64), plus: (usize, f64), h: f64) -> ([(usize, f64); 3], [(usize, f64); 3]) {
    let (m, tm) = minus;
    let (p, tp) = plus;
    let sum = tm + tp;
    let d1 = [
        (m, -tp / (tm * sum) / h),
        (k, (tp - tm) / (tm * tp) / h),
        (p, tm / (tp * sum) / h),
    ];
    let d2 = [
        (m, 2.0 / (tm * sum) / (h * h)),
        (k, -2.0 / (tm * tp) / (h * h)),
        (p, 2.0 / (tp * sum) / (h * h)),
    ];
    (d1, d2)
}

/// Gradient at a boundary node from a least-squares quadratic through every node
/// within `2.5h`; second-order accurate for smooth data.
fn least_squares_gradient(k: usize, positions: &[[f64; 2]], h: f64) -> JetStencil {
    let p0 = positions[k];
    let reach = 2.5 * h;
    let near: Vec<(usize, [f64; 2])> = positions
        .iter()
        .enumerate()
        .filter(|&(m, q)| m != k && (q[0] - p0[0]).abs() <= reach && (q[1] - p0[1]).abs() <= reach)
        .map(|(m, q)| (m, [(q[0] - p0[0]) / h, (q[1] - p0[1]) / h]))
        .filter(|(_, d)| d[0].hypot(d[1]) <= 2.5)
        .collect();
    let basis = |d: [f64; 2]| [d[0], d[1], 0.5 * d[0] * d[0], d[0] * d[1], 0.5 * d[1] * d[1]];
    let normal = Mat::<f64>::from_fn(5, 5, |a, b| near.iter().map(|(_, d)| basis(*d)[a] * basis(*d)[b]).sum());
    let lu = normal.partial_piv_lu();
    let mut s = JetStencil::default();
    for (comp, unit) in [(0usize, 0usize), (1, 1)] {
        // row `unit` of (BᵀB)⁻¹Bᵀ gives the weights on f_m − f_k
        let e = Mat::<f64>::from_fn(5, 1, |a, _| if a == unit { 1.0 } else { 0.0 });
        let row = lu.solve(&e);
        for (m, d) in &near {
            let b = basis(*d);
            let w: f64 = (0..5).map(|a| row[(a, 0)] * b[a]).sum::<f64>() / h;
            s.add(*m, comp, w);
            s.add(k, comp, -w);
        }
    }
    s
}

/// Length of the straight segment `a → b` in the metric `λ|dx|` (8-point Gauss–Legendre).
fn base_length(a: [f64; 2], b: [f64; 2], params: &SpaceParams) -> f64 {
    const NODES: [f64; 4] = [0.183_434_642_495_650, 0.525_532_409_916_329, 0.796_666_477_413_627, 0.960_289_856_497_536];
    const WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887, 0.222_381_034_453_374, 0.101_228_536_290_376];
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    if params.kappa() == 0.0 || len == 0.0 {
        return len;
    }
    let lam = |t: f64| {
        let x = a[0] + t * (b[0] - a[0]);
        let y = a[1] + t * (b[1] - a[1]);
        4.0 / (4.0 + params.kappa() * (x * x + y * y))
    };
    let mut acc = 0.0;
    for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
        acc += w * (lam(0.5 + 0.5 * x) + lam(0.5 - 0.5 * x));
    }
    0.5 * acc * len
}
