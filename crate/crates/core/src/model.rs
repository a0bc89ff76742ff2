//! Ambient geometry of the unified E(κ,τ) model.
//!
//! The model lives on ℝ³ (κ ≥ 0) or on 𝔻(2/√−κ)×ℝ (κ < 0) with line element
//!
//! ```text
//! ds² = λ²(dx² + dy²) + (dz + τλ(y dx − x dy))²,   λ = 4 / (4 + κ(x² + y²)).
//! ```
//!
//! `∂z` is a unit Killing field generating vertical translations, and
//! `E₁ = ∂x/λ − τy∂z`, `E₂ = ∂y/λ + τx∂z`, `E₃ = ∂z` is an orthonormal frame.
//! Cross products are taken with the orientation `E₁×E₂ = E₃`.
//!
//! Every quantity here is computed in the coordinate basis `(∂x, ∂y, ∂z)`.
//! The metric is independent of `z`, so all `z`-derivatives vanish identically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::small::{bilinear, mat_vec, Mat3, Vec3};

/// Margin kept inside the boundary circle of the hyperbolic base.
pub const DOMAIN_MARGIN: f64 = 1e-9;

/// Step of the five-point centered differences used for derivatives of Christoffel symbols.
pub const CURVATURE_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceParams {
    kappa: f64,
    tau: f64,
}

#[derive(Deserialize)]
struct RawParams {
    kappa: f64,
    tau: f64,
}

impl<'de> Deserialize<'de> for SpaceParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawParams::deserialize(d)?;
        SpaceParams::new(raw.kappa, raw.tau).map_err(serde::de::Error::custom)
    }
}

impl SpaceParams {
    /// Validates `(κ, τ)`. Flat ℝ³ (κ = τ = 0) is admitted as the reference
    /// geometry even though it sits on the excluded locus κ = 4τ².
    pub fn new(kappa: f64, tau: f64) -> Result<Self> {
        if !kappa.is_finite() || !tau.is_finite() {
            return Err(Error::InvalidParams(format!(
                "non-finite kappa/tau ({kappa}, {tau})"
            )));
        }
        if tau < 0.0 {
            return Err(Error::InvalidParams(format!(
                "tau must be nonnegative, got {tau}"
            )));
        }
        let flat = kappa == 0.0 && tau == 0.0;
        if !flat && (kappa - 4.0 * tau * tau).abs() < 1e-14 {
            return Err(Error::InvalidParams(format!(
                "kappa - 4 tau^2 must be nonzero (kappa = {kappa}, tau = {tau})"
            )));
        }
        Ok(Self { kappa, tau })
    }

    pub fn euclidean() -> Self {
        Self { kappa: 0.0, tau: 0.0 }
    }

    /// Heisenberg space Nil₃ with bundle curvature `tau`.
    pub fn nil(tau: f64) -> Result<Self> {
        if tau <= 0.0 {
            return Err(Error::InvalidParams("Nil3 needs tau > 0".into()));
        }
        Self::new(0.0, tau)
    }

    /// The universal cover of PSL₂(ℝ) with base curvature `kappa < 0`.
    pub fn psl(kappa: f64, tau: f64) -> Result<Self> {
        if kappa >= 0.0 || tau <= 0.0 {
            return Err(Error::InvalidParams("PSL2 needs kappa < 0 and tau > 0".into()));
        }
        Self::new(kappa, tau)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Radius `2/√−κ` of the base disk when κ < 0; `None` when the model is all of ℝ³.
    pub fn domain_radius(&self) -> Option<f64> {
        (self.kappa < 0.0).then(|| 2.0 / (-self.kappa).sqrt())
    }

    /// True for Nil₃ and PSL̃₂(ℝ), the spaces covered by the height estimate.
    pub fn in_theorem_scope(&self) -> bool {
        self.tau > 0.0 && self.kappa <= 0.0
    }

    pub fn is_flat(&self) -> bool {
        self.kappa == 0.0 && self.tau == 0.0
    }

    pub(crate) fn require_nonpositive_kappa(&self) -> Result<()> {
        if self.kappa > 0.0 {
            Err(Error::UnsupportedSign(self.kappa))
        } else {
            Ok(())
        }
    }

    /// Fails with `OutOfDomain` unless `(x, y)` lies strictly inside the base.
    pub fn check_xy(&self, x: f64, y: f64) -> Result<()> {
        if let Some(radius) = self.domain_radius() {
            let limit = radius - DOMAIN_MARGIN;
            if !(x * x + y * y < limit * limit) {
                return Err(Error::OutOfDomain { x, y, radius });
            }
        } else if !(x.is_finite() && y.is_finite()) {
            return Err(Error::OutOfDomain { x, y, radius: f64::INFINITY });
        }
        Ok(())
    }

    /// Scalar curvature of the space, evaluated tensorially at the origin.
    /// The space is homogeneous, so this is a global constant.
    pub fn scalar_curvature(&self) -> f64 {
        curvature_report(Point3::ORIGIN, self)
            .expect("origin is always inside the model")
            .scalar
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    fn shifted(&self, axis: usize, delta: f64) -> Self {
        let mut c = [self.x, self.y, self.z];
        c[axis] += delta;
        Point3::new(c[0], c[1], c[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: Point3,
    /// Components along `(∂x, ∂y, ∂z)`.
    pub components: Vec3,
}

/// λ together with its exact first and second partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalFactor {
    pub value: f64,
    /// `[∂x λ, ∂y λ]`
    pub grad: [f64; 2],
    /// `[[∂xx λ, ∂xy λ], [∂xy λ, ∂yy λ]]`
    pub hessian: [[f64; 2]; 2],
}

pub fn conformal_factor(x: f64, y: f64, params: &SpaceParams) -> Result<ConformalFactor> {
    params.check_xy(x, y)?;
    Ok(conformal_unchecked(x, y, params.kappa))
}

fn conformal_unchecked(x: f64, y: f64, kappa: f64) -> ConformalFactor {
    let lam = 4.0 / (4.0 + kappa * (x * x + y * y));
    let l2 = lam * lam;
    let l3 = l2 * lam;
    // ∂λ = −κ x λ²/2, and differentiating once more
    let grad = [-0.5 * kappa * x * l2, -0.5 * kappa * y * l2];
    let k2 = kappa * kappa;
    let hxx = -0.5 * kappa * l2 + 0.5 * k2 * x * x * l3;
    let hyy = -0.5 * kappa * l2 + 0.5 * k2 * y * y * l3;
    let hxy = 0.5 * k2 * x * y * l3;
    ConformalFactor {
        value: lam,
        grad,
        hessian: [[hxx, hxy], [hxy, hyy]],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricAtPoint {
    pub g: Mat3,
    pub g_inv: Mat3,
    /// `dg[i][j][k] = ∂_k g_ij`
    pub dg: [[[f64; 3]; 3]; 3],
}

impl MetricAtPoint {
    pub fn inner(&self, a: &Vec3, b: &Vec3) -> f64 {
        bilinear(&self.g, a, b)
    }

    pub fn norm(&self, a: &Vec3) -> f64 {
        self.inner(a, a).sqrt()
    }
}

pub fn metric_at(p: Point3, params: &SpaceParams) -> Result<MetricAtPoint> {
    params.check_xy(p.x, p.y)?;
    Ok(metric_unchecked(p.x, p.y, params))
}

fn metric_unchecked(x: f64, y: f64, params: &SpaceParams) -> MetricAtPoint {
    let tau = params.tau;
    let cf = conformal_unchecked(x, y, params.kappa);
    let lam = cf.value;
    let [lx, ly] = cf.grad;

    // the vertical coframe dz + τλ(y dx − x dy) = w_i dx^i
    let w = [tau * lam * y, -tau * lam * x, 1.0];
    // dw[i][k] = ∂_k w_i
    let dw = [
        [tau * lx * y, tau * (ly * y + lam), 0.0],
        [-tau * (lx * x + lam), -tau * ly * x, 0.0],
        [0.0, 0.0, 0.0],
    ];

    let mut g = [[0.0; 3]; 3];
    let mut dg = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            g[i][j] = w[i] * w[j];
            for k in 0..3 {
                dg[i][j][k] = dw[i][k] * w[j] + w[i] * dw[j][k];
            }
        }
    }
    for i in 0..2 {
        g[i][i] += lam * lam;
        dg[i][i][0] += 2.0 * lam * lx;
        dg[i][i][1] += 2.0 * lam * ly;
    }

    // g⁻¹ = Σ_a E_a E_aᵀ for the orthonormal frame
    let e = frame_components(x, y, lam, tau);
    let mut g_inv = [[0.0; 3]; 3];
    for ea in &e {
        for i in 0..3 {
            for j in 0..3 {
                g_inv[i][j] += ea[i] * ea[j];
            }
        }
    }
    MetricAtPoint { g, g_inv, dg }
}

fn frame_components(x: f64, y: f64, lam: f64, tau: f64) -> [Vec3; 3] {
    [
        [1.0 / lam, 0.0, -tau * y],
        [0.0, 1.0 / lam, tau * x],
        [0.0, 0.0, 1.0],
    ]
}

/// The orthonormal frame `(E₁, E₂, E₃)` at `p`.
pub fn orthonormal_frame(p: Point3, params: &SpaceParams) -> Result<[TangentVector; 3]> {
    let cf = conformal_factor(p.x, p.y, params)?;
    let e = frame_components(p.x, p.y, cf.value, params.tau);
    Ok(e.map(|components| TangentVector { base: p, components }))
}

/// Levi-Civita connection coefficients, `gamma[k][i][j] = Γ^k_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel {
    pub gamma: [[[f64; 3]; 3]; 3],
}

impl Christoffel {
    pub fn from_metric(m: &MetricAtPoint) -> Self {
        let mut lowered = [[[0.0; 3]; 3]; 3];
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    lowered[l][i][j] = 0.5 * (m.dg[l][j][i] + m.dg[l][i][j] - m.dg[i][j][l]);
                }
            }
        }
        let mut gamma = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    gamma[k][i][j] = (0..3).map(|l| m.g_inv[k][l] * lowered[l][i][j]).sum();
                }
            }
        }
        Christoffel { gamma }
    }

    /// `Γ(a, b)^k = Γ^k_ij a^i b^j`
    pub fn contract(&self, a: &Vec3, b: &Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    *o += self.gamma[k][i][j] * a[i] * b[j];
                }
            }
        }
        out
    }
}

pub fn christoffel(p: Point3, params: &SpaceParams) -> Result<Christoffel> {
    Ok(Christoffel::from_metric(&metric_at(p, params)?))
}

/// Metric and connection at one point, bundled for repeated pointwise work.
#[derive(Debug, Clone, Copy)]
pub struct AmbientPoint {
    pub point: Point3,
    pub metric: MetricAtPoint,
    pub christoffel: Christoffel,
}

impl AmbientPoint {
    pub fn new(p: Point3, params: &SpaceParams) -> Result<Self> {
        let metric = metric_at(p, params)?;
        Ok(Self {
            point: p,
            christoffel: Christoffel::from_metric(&metric),
            metric,
        })
    }
}

/// Cross product of tangent vectors at `p` with orientation `E₁×E₂ = E₃`.
pub fn cross(p: Point3, a: &Vec3, b: &Vec3, params: &SpaceParams) -> Result<Vec3> {
    let cf = conformal_factor(p.x, p.y, params)?;
    let lam = cf.value;
    let tau = params.tau;
    // frame coordinates: a = Σ α_i E_i
    let to_frame = |v: &Vec3| -> Vec3 {
        let a1 = lam * v[0];
        let a2 = lam * v[1];
        [a1, a2, v[2] + tau * lam * (p.y * v[0] - p.x * v[1])]
    };
    let fa = to_frame(a);
    let fb = to_frame(b);
    let c = [
        fa[1] * fb[2] - fa[2] * fb[1],
        fa[2] * fb[0] - fa[0] * fb[2],
        fa[0] * fb[1] - fa[1] * fb[0],
    ];
    let e = frame_components(p.x, p.y, lam, tau);
    let mut out = [0.0; 3];
    for (ci, ei) in c.iter().zip(e.iter()) {
        for k in 0..3 {
            out[k] += ci * ei[k];
        }
    }
    Ok(out)
}

/// `∇_X ∂z`; the coordinate field `∂z` is constant, so only Γ contributes.
pub fn covariant_derivative_of_vertical(p: Point3, x: &Vec3, params: &SpaceParams) -> Result<Vec3> {
    let c = christoffel(p, params)?;
    Ok(c.contract(x, &[0.0, 0.0, 1.0]))
}

/// Metric norm of `∇_X ∂z − τ X×∂z`.
pub fn killing_residual(p: Point3, x: &Vec3, params: &SpaceParams) -> Result<f64> {
    let m = metric_at(p, params)?;
    let lhs = Christoffel::from_metric(&m).contract(x, &[0.0, 0.0, 1.0]);
    let rhs = cross(p, x, &[0.0, 0.0, 1.0], params)?;
    let d = [
        lhs[0] - params.tau * rhs[0],
        lhs[1] - params.tau * rhs[1],
        lhs[2] - params.tau * rhs[2],
    ];
    Ok(m.norm(&d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureReport {
    pub christoffel: Christoffel,
    /// Ricci tensor in the coordinate basis.
    pub ricci: Mat3,
    /// `Ric(E_a, E_a)` for the orthonormal frame.
    pub ricci_diag_frame: [f64; 3],
    pub scalar: f64,
    /// Largest Killing residual over the frame vectors at this point.
    pub killing_residual: f64,
}

impl CurvatureReport {
    /// `Ric(v, v)` for a coordinate vector `v`.
    pub fn ricci_of(&self, v: &Vec3) -> f64 {
        bilinear(&self.ricci, v, v)
    }
}

/// Ricci tensor from Γ and its centered-difference derivatives.
pub fn curvature_report(p: Point3, params: &SpaceParams) -> Result<CurvatureReport> {
    let m = metric_at(p, params)?;
    let gamma = Christoffel::from_metric(&m);
    let h = CURVATURE_FD_STEP;

    // dgamma[d][a][b][c] = ∂_d Γ^a_bc
    let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
    for (d, slot) in dgamma.iter_mut().enumerate().take(2) {
        let plus = christoffel(p.shifted(d, h), params)?;
        let minus = christoffel(p.shifted(d, -h), params)?;
        let plus2 = christoffel(p.shifted(d, 2.0 * h), params)?;
        let minus2 = christoffel(p.shifted(d, -2.0 * h), params)?;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    slot[a][b][c] = (8.0 * (plus.gamma[a][b][c] - minus.gamma[a][b][c])
                        - (plus2.gamma[a][b][c] - minus2.gamma[a][b][c]))
                        / (12.0 * h);
                }
            }
        }
    }
    // the metric does not depend on z, so ∂_z Γ = 0

    let ricci = ricci_from(&gamma.gamma, &dgamma);
    let scalar = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| m.g_inv[i][j] * ricci[i][j])
        .sum();

    let lam = conformal_unchecked(p.x, p.y, params.kappa).value;
    let e = frame_components(p.x, p.y, lam, params.tau);
    let ricci_diag_frame = e.map(|ea| bilinear(&ricci, &ea, &ea));
    let mut killing = 0.0_f64;
    for ea in &e {
        killing = killing.max(killing_residual(p, ea, params)?);
    }

    Ok(CurvatureReport {
        christoffel: gamma,
        ricci,
        ricci_diag_frame,
        scalar,
        killing_residual: killing,
    })
}

/// `R_bd = ∂_a Γ^a_db − ∂_d Γ^a_ab + Γ^a_ae Γ^e_db − Γ^a_de Γ^e_ab`
pub(crate) fn ricci_from(gamma: &[[[f64; 3]; 3]; 3], dgamma: &[[[[f64; 3]; 3]; 3]; 3]) -> Mat3 {
    let mut ric = [[0.0; 3]; 3];
    for b in 0..3 {
        for d in 0..3 {
            let mut s = 0.0;
            for a in 0..3 {
                s += dgamma[a][a][d][b] - dgamma[d][a][a][b];
                for e in 0..3 {
                    s += gamma[a][a][e] * gamma[e][d][b] - gamma[a][d][e] * gamma[e][a][b];
                }
            }
            ric[b][d] = s;
        }
    }
    ric
}

/// `√−κ / 2`.
pub fn critical_mean_curvature(params: &SpaceParams) -> Result<f64> {
    params.require_nonpositive_kappa()?;
    Ok((-params.kappa).sqrt() / 2.0)
}

/// Rotational H-spheres exist exactly when `4H² + κ > 0`.
pub fn sphere_exists(h: f64, params: &SpaceParams) -> Result<bool> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveH(h));
    }
    Ok(4.0 * h * h + params.kappa > 0.0)
}

/// Coordinate-basis vector `v` expressed as `g(v, ·)`.
pub fn lower(m: &MetricAtPoint, v: &Vec3) -> Vec3 {
    mat_vec(&m.g, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spaces() -> Vec<SpaceParams> {
        vec![
            SpaceParams::euclidean(),
            SpaceParams::nil(0.5).unwrap(),
            SpaceParams::nil(1.3).unwrap(),
            SpaceParams::psl(-1.0, 0.5).unwrap(),
            SpaceParams::psl(-4.0, 0.2).unwrap(),
            SpaceParams::new(-1.0, 0.0).unwrap(),
        ]
    }

    fn random_point(rng: &mut ChaCha8Rng, params: &SpaceParams) -> Point3 {
        let r_max = params.domain_radius().map_or(3.0, |r| 0.9 * r);
        loop {
            let x = rng.gen_range(-r_max..r_max);
            let y = rng.gen_range(-r_max..r_max);
            if x * x + y * y < r_max * r_max {
                return Point3::new(x, y, rng.gen_range(-5.0..5.0));
            }
        }
    }

    #[test]
    fn conformal_factor_values() {
        let nil = SpaceParams::nil(0.5).unwrap();
        assert_eq!(conformal_factor(0.0, 0.0, &nil).unwrap().value, 1.0);
        assert_eq!(conformal_factor(3.0, -2.0, &nil).unwrap().value, 1.0);
        let psl = SpaceParams::psl(-1.0, 0.5).unwrap();
        assert!((conformal_factor(1.0, 1.0, &psl).unwrap().value - 2.0).abs() < 1e-15);
        assert_eq!(conformal_factor(0.0, 0.0, &psl).unwrap().value, 1.0);
    }

    #[test]
    fn conformal_derivatives_match_differences() {
        let p = SpaceParams::psl(-1.5, 0.3).unwrap();
        let (x, y, h) = (0.4, -0.7, 1e-5);
        let c = conformal_factor(x, y, &p).unwrap();
        let f = |x: f64, y: f64| conformal_factor(x, y, &p).unwrap();
        let gx = (f(x + h, y).value - f(x - h, y).value) / (2.0 * h);
        let gy = (f(x, y + h).value - f(x, y - h).value) / (2.0 * h);
        assert!((gx - c.grad[0]).abs() < 1e-8);
        assert!((gy - c.grad[1]).abs() < 1e-8);
        let hxx = (f(x + h, y).grad[0] - f(x - h, y).grad[0]) / (2.0 * h);
        let hxy = (f(x, y + h).grad[0] - f(x, y - h).grad[0]) / (2.0 * h);
        let hyy = (f(x, y + h).grad[1] - f(x, y - h).grad[1]) / (2.0 * h);
        assert!((hxx - c.hessian[0][0]).abs() < 1e-8);
        assert!((hxy - c.hessian[0][1]).abs() < 1e-8);
        assert!((hyy - c.hessian[1][1]).abs() < 1e-8);
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let psl = SpaceParams::psl(-1.0, 0.5).unwrap();
        assert!(matches!(
            conformal_factor(1.5, 1.5, &psl),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(matches!(
            metric_at(Point3::new(2.0, 0.0, 0.0), &psl),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(metric_at(Point3::new(1.99, 0.0, 0.0), &psl).is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(SpaceParams::new(1.0, 0.5).is_err());
        assert!(SpaceParams::new(0.0, -1.0).is_err());
        assert!(SpaceParams::new(f64::NAN, 0.0).is_err());
        assert!(SpaceParams::new(0.0, 0.0).is_ok());
        let psl = SpaceParams::psl(-1.0, 0.5).unwrap();
        assert_eq!(psl.domain_radius(), Some(2.0));
        assert!(psl.in_theorem_scope());
        assert!(SpaceParams::nil(0.5).unwrap().in_theorem_scope());
        assert!(!SpaceParams::euclidean().in_theorem_scope());
        assert!(!SpaceParams::new(-1.0, 0.0).unwrap().in_theorem_scope());
        assert!(SpaceParams::nil(0.5).unwrap().domain_radius().is_none());
        let parsed: SpaceParams = serde_json::from_str(r#"{"kappa": -1.0, "tau": 0.5}"#).unwrap();
        assert_eq!(parsed, psl);
        assert!(serde_json::from_str::<SpaceParams>(r#"{"kappa": 1.0, "tau": 0.5}"#).is_err());
    }

    #[test]
    fn metric_examples() {
        for p in spaces() {
            let m = metric_at(Point3::new(0.0, 0.0, 3.0), &p).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(m.g[i][j], if i == j { 1.0 } else { 0.0 });
                }
            }
        }
        let p = SpaceParams::nil(1.0).unwrap();
        let m = metric_at(Point3::new(0.0, 1.0, 0.0), &p).unwrap();
        assert_eq!(m.g, [[2.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]);
        let m2 = metric_at(Point3::new(0.0, 1.0, -7.5), &p).unwrap();
        assert_eq!(m.g, m2.g);
    }

    #[test]
    fn metric_inverse_and_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in spaces() {
            for _ in 0..50 {
                let pt = random_point(&mut rng, &p);
                let m = metric_at(pt, &p).unwrap();
                let prod = crate::small::mat_mul3(&m.g, &m.g_inv);
                for i in 0..3 {
                    for j in 0..3 {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((prod[i][j] - e).abs() < 1e-12);
                    }
                }
                let h = 1e-6;
                for k in 0..2 {
                    let mp = metric_at(pt.shifted(k, h), &p).unwrap();
                    let mm = metric_at(pt.shifted(k, -h), &p).unwrap();
                    for i in 0..3 {
                        for j in 0..3 {
                            let fd = (mp.g[i][j] - mm.g[i][j]) / (2.0 * h);
                            assert!((fd - m.dg[i][j][k]).abs() < 1e-7 * (1.0 + fd.abs()));
                            assert_eq!(m.dg[i][j][k], m.dg[j][i][k]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn frame_examples_and_orthonormality() {
        let p = SpaceParams::nil(1.0).unwrap();
        let e = orthonormal_frame(Point3::new(0.0, 1.0, 0.0), &p).unwrap();
        assert_eq!(e[0].components, [1.0, 0.0, -1.0]);
        let e0 = orthonormal_frame(Point3::ORIGIN, &SpaceParams::psl(-2.0, 0.4).unwrap()).unwrap();
        assert_eq!(e0[0].components, [1.0, 0.0, 0.0]);
        assert_eq!(e0[1].components, [0.0, 1.0, 0.0]);
        assert_eq!(e0[2].components, [0.0, 0.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in spaces() {
            for _ in 0..100 {
                let pt = random_point(&mut rng, &p);
                let m = metric_at(pt, &p).unwrap();
                let e = orthonormal_frame(pt, &p).unwrap();
                for a in 0..3 {
                    for b in 0..3 {
                        let gab = m.inner(&e[a].components, &e[b].components);
                        let want = if a == b { 1.0 } else { 0.0 };
                        assert!((gab - want).abs() < 1e-12, "gram {a}{b} = {gab}");
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_flat_is_zero() {
        let c = christoffel(Point3::new(0.3, -1.2, 4.0), &SpaceParams::euclidean()).unwrap();
        assert!(c.gamma.iter().flatten().flatten().all(|&v| v == 0.0));
        let r = curvature_report(Point3::new(0.3, -1.2, 4.0), &SpaceParams::euclidean()).unwrap();
        assert_eq!(r.scalar, 0.0);
        assert!(r.ricci.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn christoffel_symmetric_and_metric_compatible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in spaces() {
            for _ in 0..40 {
                let pt = random_point(&mut rng, &p);
                let m = metric_at(pt, &p).unwrap();
                let c = Christoffel::from_metric(&m);
                for k in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            assert_eq!(c.gamma[k][i][j], c.gamma[k][j][i]);
                        }
                    }
                }
                // ∂_k g_ij = g_lj Γ^l_ki + g_il Γ^l_kj
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            let rhs: f64 = (0..3)
                                .map(|l| m.g[l][j] * c.gamma[l][k][i] + m.g[i][l] * c.gamma[l][k][j])
                                .sum();
                            assert!((m.dg[i][j][k] - rhs).abs() < 1e-8);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_matches_finite_difference_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in spaces() {
            for _ in 0..20 {
                let pt = random_point(&mut rng, &p);
                let mut m = metric_at(pt, &p).unwrap();
                let exact = Christoffel::from_metric(&m);
                let h = 1e-5;
                for k in 0..3 {
                    let mp = metric_at(pt.shifted(k, h), &p).unwrap();
                    let mm = metric_at(pt.shifted(k, -h), &p).unwrap();
                    for i in 0..3 {
                        for j in 0..3 {
                            m.dg[i][j][k] = (mp.g[i][j] - mm.g[i][j]) / (2.0 * h);
                        }
                    }
                }
                let fd = Christoffel::from_metric(&m);
                for (a, b) in exact.gamma.iter().flatten().flatten().zip(fd.gamma.iter().flatten().flatten()) {
                    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn killing_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for p in spaces() {
            for _ in 0..200 {
                let pt = random_point(&mut rng, &p);
                let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                assert!(killing_residual(pt, &x, &p).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn cross_product_orientation() {
        let p = SpaceParams::psl(-1.0, 0.7).unwrap();
        let pt = Point3::new(0.2, 0.5, 1.0);
        let e = orthonormal_frame(pt, &p).unwrap();
        let c = cross(pt, &e[0].components, &e[1].components, &p).unwrap();
        for k in 0..3 {
            assert!((c[k] - e[2].components[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_curvature_is_homogeneous() {
        for p in spaces() {
            let s0 = curvature_report(Point3::ORIGIN, &p).unwrap().scalar;
            let s1 = curvature_report(Point3::new(1.0, 0.5, 2.0).min_inside(&p), &p)
                .unwrap()
                .scalar;
            assert!((s0 - s1).abs() < 1e-9, "{s0} vs {s1}");
        }
    }

    #[test]
    fn scalar_curvature_frozen_values() {
        // symbolic evaluation of the model metric: S = 2κ − 2τ²
        let nil = SpaceParams::nil(0.5).unwrap();
        assert!((nil.scalar_curvature() + 0.5).abs() < 1e-9);
        let psl = SpaceParams::psl(-1.0, 0.5).unwrap();
        assert!((psl.scalar_curvature() + 2.5).abs() < 1e-9);
        let r = curvature_report(Point3::new(0.3, 0.1, 0.0), &SpaceParams::psl(-4.0, 1.0 / 3.0).unwrap()).unwrap();
        assert!((r.scalar + 74.0 / 9.0).abs() < 1e-8);
    }

    #[test]
    fn ricci_in_frame() {
        // Ric(E1) = Ric(E2) = κ − 2τ², Ric(E3) = 2τ²
        let p = SpaceParams::psl(-1.0, 0.5).unwrap();
        let r = curvature_report(Point3::new(0.4, -0.3, 0.0), &p).unwrap();
        assert!((r.ricci_diag_frame[0] + 1.5).abs() < 1e-9);
        assert!((r.ricci_diag_frame[1] + 1.5).abs() < 1e-9);
        assert!((r.ricci_diag_frame[2] - 0.5).abs() < 1e-9);
        assert!(r.killing_residual < 1e-12);
    }

    #[test]
    fn critical_curvature_and_sphere_existence() {
        assert_eq!(critical_mean_curvature(&SpaceParams::euclidean()).unwrap(), 0.0);
        assert_eq!(critical_mean_curvature(&SpaceParams::new(-4.0, 0.0).unwrap()).unwrap(), 1.0);
        assert_eq!(critical_mean_curvature(&SpaceParams::psl(-1.0, 0.5).unwrap()).unwrap(), 0.5);
        assert!(matches!(
            critical_mean_curvature(&SpaceParams::new(1.0, 0.0).unwrap()),
            Err(Error::UnsupportedSign(_))
        ));
        assert!(sphere_exists(1.0, &SpaceParams::euclidean()).unwrap());
        let k4 = SpaceParams::new(-4.0, 0.0).unwrap();
        assert!(!sphere_exists(1.0, &k4).unwrap());
        assert!(sphere_exists(1.01, &k4).unwrap());
        assert!(matches!(sphere_exists(0.0, &k4), Err(Error::NonPositiveH(_))));
    }

    impl Point3 {
        fn min_inside(self, p: &SpaceParams) -> Self {
            match p.domain_radius() {
                Some(r) if self.x.hypot(self.y) >= 0.9 * r => {
                    let s = 0.5 * r / self.x.hypot(self.y);
                    Point3::new(self.x * s, self.y * s, self.z)
                }
                _ => self,
            }
        }
    }
}
