//! Pointwise extrinsic geometry of vertical graphs `z = f(x, y)`.
//!
//! The graph is parametrized by `(x, y) ↦ (x, y, f)`, with coordinate tangent
//! fields `T₁ = (1, 0, f_x)` and `T₂ = (0, 1, f_y)`. The covector
//! `n = dz − f_x dx − f_y dy` annihilates both, so the upward unit normal is
//! `g⁻¹n / |n|` and its angle function is `ν = 1/|n| > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AmbientPoint, Point3, SpaceParams, TangentVector};
use crate::small::{bilinear, det2, dot3, inv2, mat_mul2, mat_vec, Mat2, Vec3};

/// Below this determinant the first fundamental form is treated as singular.
pub const MIN_FIRST_FORM_DET: f64 = 1e-14;

/// Second-order data of a graph function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jet2 {
    pub x: f64,
    pub y: f64,
    pub f: f64,
    pub fx: f64,
    pub fy: f64,
    pub fxx: f64,
    pub fxy: f64,
    pub fyy: f64,
}

impl Jet2 {
    /// Jet of the constant function `f ≡ c` at `(x, y)`.
    pub fn constant(x: f64, y: f64, c: f64) -> Self {
        Jet2 { x, y, f: c, ..Default::default() }
    }

    pub fn point(&self) -> Point3 {
        Point3::new(self.x, self.y, self.f)
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.f, self.fx, self.fy, self.fxx, self.fxy, self.fyy]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Choice of unit normal. The graph literature this toolkit follows works with
/// downward-oriented graphs (`ν < 0`), which is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Orientation {
    #[default]
    Downward,
    Upward,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Downward => -1.0,
            Orientation::Upward => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Downward => Orientation::Upward,
            Orientation::Upward => Orientation::Downward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeData {
    pub first_form: Mat2,
    pub second_form: Mat2,
    pub normal: TangentVector,
    /// Angle function `⟨η, ∂z⟩`.
    pub nu: f64,
    pub mean_curvature: f64,
    /// Squared norm of the shape operator, `tr(S²)` with `S = I⁻¹ II`.
    pub sigma_sq: f64,
}

pub fn shape_data(jet: &Jet2, params: &SpaceParams, orientation: Orientation) -> Result<ShapeData> {
    params.require_nonpositive_kappa()?;
    let ambient = AmbientPoint::new(jet.point(), params)?;
    shape_data_at(&ambient, jet, orientation)
}

/// Same as [`shape_data`] with the ambient metric and connection already evaluated
/// at `(jet.x, jet.y)`. The metric is `z`-independent, so `ambient` may have been
/// built at any height.
pub fn shape_data_at(ambient: &AmbientPoint, jet: &Jet2, orientation: Orientation) -> Result<ShapeData> {
    if !jet.is_finite() {
        return Err(Error::DegenerateMetric(f64::NAN));
    }
    let m = &ambient.metric;
    let t1: Vec3 = [1.0, 0.0, jet.fx];
    let t2: Vec3 = [0.0, 1.0, jet.fy];
    let first_form = [
        [bilinear(&m.g, &t1, &t1), bilinear(&m.g, &t1, &t2)],
        [bilinear(&m.g, &t2, &t1), bilinear(&m.g, &t2, &t2)],
    ];
    let det = det2(&first_form);
    if !(det >= MIN_FIRST_FORM_DET) {
        return Err(Error::DegenerateMetric(det));
    }

    let n: Vec3 = [-jet.fx, -jet.fy, 1.0];
    let n_sharp = mat_vec(&m.g_inv, &n);
    let n_norm = dot3(&n, &n_sharp).sqrt();
    let s = orientation.sign();

    // II_ab = ⟨∂_a∂_b X + Γ(T_a, T_b), N⟩, and ⟨V, N⟩ = n(V)/|n| for the upward N
    let second = |ta: &Vec3, tb: &Vec3, fab: f64| -> f64 {
        let gam = ambient.christoffel.contract(ta, tb);
        s * (fab + dot3(&n, &gam)) / n_norm
    };
    let ii12 = second(&t1, &t2, jet.fxy);
    let second_form = [
        [second(&t1, &t1, jet.fxx), ii12],
        [ii12, second(&t2, &t2, jet.fyy)],
    ];

    let shape = mat_mul2(&inv2(&first_form), &second_form);
    let mean_curvature = 0.5 * (shape[0][0] + shape[1][1]);
    let sq = mat_mul2(&shape, &shape);
    let sigma_sq = sq[0][0] + sq[1][1];

    Ok(ShapeData {
        first_form,
        second_form,
        normal: TangentVector {
            base: ambient.point,
            components: n_sharp.map(|c| s * c / n_norm),
        },
        nu: s / n_norm,
        mean_curvature,
        sigma_sq,
    })
}

pub fn mean_curvature(jet: &Jet2, params: &SpaceParams, orientation: Orientation) -> Result<f64> {
    Ok(shape_data(jet, params, orientation)?.mean_curvature)
}

pub fn angle_function(jet: &Jet2, params: &SpaceParams, orientation: Orientation) -> Result<f64> {
    Ok(shape_data(jet, params, orientation)?.nu)
}

/// Potential of the Jacobi operator, `(1 − ν²)(κ − 4τ²) + |σ|² + 2τ²`.
pub fn jacobi_potential(jet: &Jet2, params: &SpaceParams) -> Result<f64> {
    let sd = shape_data(jet, params, Orientation::default())?;
    Ok(potential_from(&sd, params))
}

pub(crate) fn potential_from(sd: &ShapeData, params: &SpaceParams) -> f64 {
    let (k, t) = (params.kappa(), params.tau());
    (1.0 - sd.nu * sd.nu) * (k - 4.0 * t * t) + sd.sigma_sq + 2.0 * t * t
}

/// `H = A + B_xx f_xx + B_xy f_xy + B_yy f_yy`; the mean curvature is affine in
/// the second derivatives because the second fundamental form is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMeanCurvature {
    pub constant: f64,
    pub fxx: f64,
    pub fxy: f64,
    pub fyy: f64,
}

pub fn affine_mean_curvature(
    ambient: &AmbientPoint,
    jet: &Jet2,
    orientation: Orientation,
) -> Result<AffineMeanCurvature> {
    let base = Jet2 { fxx: 0.0, fxy: 0.0, fyy: 0.0, ..*jet };
    let h0 = shape_data_at(ambient, &base, orientation)?.mean_curvature;
    let unit = |j: Jet2| -> Result<f64> { Ok(shape_data_at(ambient, &j, orientation)?.mean_curvature - h0) };
    Ok(AffineMeanCurvature {
        constant: h0,
        fxx: unit(Jet2 { fxx: 1.0, ..base })?,
        fxy: unit(Jet2 { fxy: 1.0, ..base })?,
        fyy: unit(Jet2 { fyy: 1.0, ..base })?,
    })
}
