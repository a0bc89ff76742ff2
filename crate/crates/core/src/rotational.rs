//! Rotationally invariant H-surfaces about the z-axis: shooting the profile of the
//! H-sphere's graphable hemisphere, and the circles whose vertical cylinders have
//! constant mean curvature.
//!
//! The profile is the graph `z = f(r)` seen along the ray `y = 0`, where the jet is
//! `fx = f′`, `fy = 0`, `fxx = f″`, `fxy = 0`, `fyy = f′/r`. The curve is integrated
//! in the coordinate arclength `s` of the `(r, f)` plane with slope angle
//! `φ = atan f′`, so the equator `φ → π/2` is a regular point:
//!
//! ```text
//! r_s = cos φ,  f_s = sin φ,  φ_s = cos³φ · f″
//! ```
//!
//! and `f″` comes from solving the pointwise mean curvature for the prescribed `H`.

use std::cell::Cell;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use ode_solvers::{Dopri5, OutputType, System, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{shape_data_at, Jet2, Orientation};
use crate::model::{conformal_factor, sphere_exists, AmbientPoint, Point3, SpaceParams};

/// `|ν|` at which the profile counts as having reached the equator.
pub const EQUATOR_NU: f64 = 1e-6;
/// Default initial step of [`hemisphere_height`].
pub const DEFAULT_STEP: f64 = 1e-3;

const RTOL: f64 = 1e-12;
const ATOL: f64 = 1e-12;
const MAX_ARCLENGTH: f64 = 1e3;
const MAX_STEPS: u32 = 200_000;
/// Stop this close (relative) to the edge of the model disk.
const DOMAIN_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Equator,
    DomainBoundary,
    StepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub r: f64,
    pub f: f64,
    pub fp: f64,
    pub fpp: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub h: f64,
    pub params: SpaceParams,
    pub samples: Vec<ProfileSample>,
    pub termination: Termination,
    /// `|f(r_equator) − f(0)|`, present when the equator was reached. With the
    /// downward orientation the profile descends from the pole, so this is the
    /// height of the upper hemisphere above its equator.
    pub hemisphere_height: Option<f64>,
}

impl ProfileCurve {
    /// Whitespace-separated columns `r f fp nu` with a header line.
    pub fn to_columns(&self) -> String {
        let mut out = String::from("r f fp nu\n");
        for s in &self.samples {
            let _ = writeln!(out, "{:.15e} {:.15e} {:.15e} {:.15e}", s.r, s.f, s.fp, s.nu);
        }
        out
    }

    pub fn equator_radius(&self) -> Option<f64> {
        match self.termination {
            Termination::Equator => self.samples.last().map(|s| s.r),
            _ => None,
        }
    }
}

/// Radial jet at `(r, 0)` of the rotational graph with slope `fp`.
fn radial_jet(r: f64, f: f64, fp: f64, fpp: f64) -> Jet2 {
    Jet2 { x: r, y: 0.0, f, fx: fp, fy: 0.0, fxx: fpp, fxy: 0.0, fyy: if r > 0.0 { fp / r } else { fpp } }
}

struct Profile {
    params: SpaceParams,
    h: f64,
    orientation: Orientation,
    failure: Cell<Option<Error>>,
    stop_radius: f64,
}

impl Profile {
    /// `φ_s` at `(r, φ)`. `H` is affine in `fxx`; probing with `fxx = sec³φ` keeps
    /// both evaluations of order one even when the graph is nearly vertical.
    fn phi_s(&self, r: f64, phi: f64) -> Result<f64> {
        let phi = phi.min(FRAC_PI_2 - 1e-9);
        let amb = AmbientPoint::new(Point3::new(r, 0.0, 0.0), &self.params)?;
        let fp = phi.tan();
        let probe = phi.cos().powi(-3);
        let base = shape_data_at(&amb, &radial_jet(r, 0.0, fp, 0.0), self.orientation)?.mean_curvature;
        let unit = shape_data_at(&amb, &radial_jet(r, 0.0, fp, probe), self.orientation)?.mean_curvature - base;
        if !(unit.abs() > 1e-300) || !unit.is_finite() || !base.is_finite() {
            return Err(Error::SingularStep(r));
        }
        Ok((self.h - base) / unit)
    }

    fn second_derivative(&self, r: f64, fp: f64) -> Result<f64> {
        let phi = fp.atan();
        Ok(self.phi_s(r, phi)? / phi.cos().powi(3))
    }

    fn nu(&self, r: f64, phi: f64) -> Result<f64> {
        let amb = AmbientPoint::new(Point3::new(r, 0.0, 0.0), &self.params)?;
        let jet = radial_jet(r, 0.0, phi.tan(), 0.0);
        Ok(shape_data_at(&amb, &jet, self.orientation)?.nu)
    }

    fn event(&self, y: &Vector3<f64>) -> Option<Termination> {
        if y[2] >= FRAC_PI_2 {
            return Some(Termination::Equator);
        }
        match self.nu(y[0], y[2]) {
            Ok(nu) if nu.abs() < EQUATOR_NU => Some(Termination::Equator),
            Ok(_) if y[0] >= self.stop_radius => Some(Termination::DomainBoundary),
            Ok(_) => None,
            Err(_) => Some(Termination::DomainBoundary),
        }
    }
}

/// Borrowing adapter handed to the integrator; failures are parked in the profile.
struct Rhs<'a>(&'a Profile);

impl System<f64, Vector3<f64>> for Rhs<'_> {
    fn system(&self, _s: f64, y: &Vector3<f64>, dy: &mut Vector3<f64>) {
        let (r, phi) = (y[0], y[2]);
        let phi_c = phi.min(FRAC_PI_2 - 1e-9);
        dy[0] = phi_c.cos();
        dy[1] = phi_c.sin();
        dy[2] = match self.0.phi_s(r, phi) {
            Ok(v) => v,
            Err(e) => {
                self.0.failure.set(Some(e));
                0.0
            }
        };
    }

    fn solout(&mut self, _s: f64, y: &Vector3<f64>, _dy: &Vector3<f64>) -> bool {
        let failed = self.0.failure.take();
        let stop = failed.is_some() || self.0.event(y).is_some();
        self.0.failure.set(failed);
        stop
    }
}

/// Integrates over `[s0, s1]` and returns the states at every accepted step.
fn integrate(profile: &Profile, s0: f64, s1: f64, y0: Vector3<f64>, step: f64) -> Result<Vec<(f64, Vector3<f64>)>> {
    let mut solver = Dopri5::from_param(
        Rhs(profile),
        s0,
        s1,
        step,
        y0,
        RTOL,
        ATOL,
        0.9,
        0.04,
        0.2,
        10.0,
        50.0 * step,
        step.min(s1 - s0),
        MAX_STEPS,
        1000,
        OutputType::Sparse,
    );
    // step-count exhaustion surfaces as a missing event, reported as StepLimit
    let _ = solver.integrate();
    if let Some(e) = profile.failure.take() {
        return Err(e);
    }
    let (xs, ys) = solver.results().get();
    Ok(xs.iter().copied().zip(ys.iter().copied()).collect())
}

/// Shoots the rotational H-graph from the pole until it turns vertical.
pub fn shoot_rotational_graph(h: f64, params: &SpaceParams, step: f64) -> Result<ProfileCurve> {
    params.require_nonpositive_kappa()?;
    if !sphere_exists(h, params)? {
        return Err(Error::NoSphere(h));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidConfig(format!("step must be positive, got {step}")));
    }
    let stop_radius = params.domain_radius().map_or(f64::INFINITY, |r| r * (1.0 - DOMAIN_MARGIN));
    let profile = Profile { params: *params, h, orientation: Orientation::default(), failure: Cell::new(None), stop_radius };

    // pole: both principal curvatures equal, fxx = fyy = c
    let pole = {
        let amb = AmbientPoint::new(Point3::ORIGIN, params)?;
        let flat = Jet2::constant(0.0, 0.0, 0.0);
        let base = shape_data_at(&amb, &flat, profile.orientation)?.mean_curvature;
        let unit = shape_data_at(&amb, &Jet2 { fxx: 1.0, fyy: 1.0, ..flat }, profile.orientation)?.mean_curvature - base;
        (h - base) / unit
    };
    // series start f = c r²/2 + d r⁴/24, with d fixed from the equation at r0
    let r0 = 10.0 * step;
    let mut d = 0.0;
    for _ in 0..4 {
        let fp = pole * r0 + d * r0.powi(3) / 6.0;
        let fpp = profile.second_derivative(r0, fp)?;
        d = 2.0 * (fpp - pole) / (r0 * r0);
    }
    let f0 = pole * r0 * r0 / 2.0 + d * r0.powi(4) / 24.0;
    let fp0 = pole * r0 + d * r0.powi(3) / 6.0;
    let y0 = Vector3::new(r0, f0, fp0.atan());

    let mut states = vec![(0.0, y0)];
    let mut termination = Termination::StepLimit;
    let mut s_start = 0.0;
    let mut y_start = y0;
    loop {
        let chunk = integrate(&profile, s_start, MAX_ARCLENGTH, y_start, step)?;
        let Some(&(s_last, y_last)) = chunk.last() else { break };
        states.extend(chunk.iter().skip(1).copied());
        match profile.event(&y_last) {
            Some(t) => {
                termination = t;
                break;
            }
            None if s_last >= MAX_ARCLENGTH || chunk.len() as u32 >= MAX_STEPS => break,
            None => {
                // the integrator returned early without an event: resume
                if s_last <= s_start {
                    break;
                }
                s_start = s_last;
                y_start = y_last;
            }
        }
    }

    if termination == Termination::Equator && states.len() >= 2 {
        // bisect the last step for |ν| = EQUATOR_NU
        let (mut s_lo, y_lo) = states[states.len() - 2];
        let (mut s_hi, mut y_hi) = states[states.len() - 1];
        let base = (s_lo, y_lo);
        for _ in 0..200 {
            if s_hi - s_lo <= 1e-14 * s_hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (s_lo + s_hi);
            let y_mid = integrate(&profile, base.0, mid, base.1, (mid - base.0).max(1e-16))?
                .last()
                .map_or(base.1, |x| x.1);
            if profile.event(&y_mid) == Some(Termination::Equator) {
                s_hi = mid;
                y_hi = y_mid;
            } else {
                s_lo = mid;
            }
        }
        let n = states.len();
        states[n - 1] = (s_hi, y_hi);
    }

    let mut samples = Vec::with_capacity(states.len() + 1);
    samples.push(ProfileSample { r: 0.0, f: 0.0, fp: 0.0, fpp: pole, nu: profile.nu(0.0, 0.0)? });
    for (_, y) in &states {
        let (r, f, phi) = (y[0], y[1], y[2].min(FRAC_PI_2 - 1e-12));
        let fp = phi.tan();
        samples.push(ProfileSample { r, f, fp, fpp: profile.second_derivative(r, fp)?, nu: profile.nu(r, phi)? });
    }
    let hemisphere_height = match termination {
        Termination::Equator => samples.last().map(|s| (s.f - samples[0].f).abs()),
        _ => None,
    };
    Ok(ProfileCurve { h, params: *params, samples, termination, hemisphere_height })
}

/// Pole-to-equator height of the graphable hemisphere of the rotational H-sphere,
/// confirmed by a second shot at half the step.
pub fn hemisphere_height(h: f64, params: &SpaceParams) -> Result<f64> {
    let coarse = shoot_rotational_graph(h, params, DEFAULT_STEP)?;
    let fine = shoot_rotational_graph(h, params, 0.5 * DEFAULT_STEP)?;
    match (coarse.hemisphere_height, fine.hemisphere_height) {
        (Some(a), Some(b)) if (a - b).abs() <= 1e-6 * b.abs().max(1.0) => Ok(b),
        (Some(a), Some(b)) => Err(Error::NonConvergence { iterations: 2, residual: (a - b).abs() }),
        _ => Err(Error::NonConvergence { iterations: 2, residual: f64::NAN }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarCircle {
    pub params: SpaceParams,
    pub geodesic_curvature: f64,
    /// Geodesic radius in the base surface; `None` when the curve is not closed.
    pub radius: Option<f64>,
    pub closed: bool,
}

/// Circle of geodesic curvature `2H` in the base surface of constant curvature κ.
pub fn cmc_cylinder_curve(h: f64, params: &SpaceParams) -> Result<PlanarCircle> {
    params.require_nonpositive_kappa()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::NonPositiveH(h));
    }
    let k = 2.0 * h;
    let kappa = params.kappa();
    let closed = k * k + kappa > 0.0;
    let radius = if !closed {
        None
    } else if kappa == 0.0 {
        Some(1.0 / k)
    } else {
        // coordinate radius a of the circle with curvature k, then its geodesic radius
        let a_max = 2.0 / (-kappa).sqrt();
        let (mut lo, mut hi) = (0.0, a_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if coordinate_circle_curvature(mid, params)? > k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(radial_length(0.5 * (lo + hi), params))
    };
    Ok(PlanarCircle { params: *params, geodesic_curvature: k, radius, closed })
}

/// Geodesic curvature of the coordinate circle `|x| = a` in the base metric,
/// as `dL/dA` of the family of concentric circles: length `L(a) = 2π a λ(a)`,
/// enclosed area `A(a) = ∫₀ᵃ 2π ρ λ(ρ)² dρ`.
fn coordinate_circle_curvature(a: f64, params: &SpaceParams) -> Result<f64> {
    let lam = |r: f64| 4.0 / (4.0 + params.kappa() * r * r);
    let da = 1e-5 * a;
    let length = |r: f64| 2.0 * std::f64::consts::PI * r * lam(r);
    let dl = (length(a + da) - length(a - da)) / (2.0 * da);
    let area_rate = 2.0 * std::f64::consts::PI * a * conformal_factor(a, 0.0, params)?.value.powi(2);
    Ok(dl / area_rate)
}

/// `∫₀ᵃ λ(ρ) dρ` by composite Simpson.
fn radial_length(a: f64, params: &SpaceParams) -> f64 {
    let lam = |r: f64| 4.0 / (4.0 + params.kappa() * r * r);
    let n = 2000;
    let h = a / n as f64;
    let mut acc = lam(0.0) + lam(a);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * lam(i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::mean_curvature;

    fn spaces() -> [SpaceParams; 3] {
        [SpaceParams::euclidean(), SpaceParams::nil(0.5).unwrap(), SpaceParams::psl(-1.0, 0.5).unwrap()]
    }

    #[test]
    fn euclidean_hemisphere_height_is_inverse_h() {
        for h in [0.5, 1.0, 2.0] {
            let got = hemisphere_height(h, &SpaceParams::euclidean()).unwrap();
            assert!((got - 1.0 / h).abs() < 1e-4, "H = {h}: {got}");
        }
    }

    #[test]
    fn euclidean_profile_is_a_circle_arc() {
        for h in [1.0, 2.0] {
            let c = shoot_rotational_graph(h, &SpaceParams::euclidean(), 1e-3).unwrap();
            // distance to the circle of radius 1/H centred at (0, −1/H); comparing f at
            // fixed r would amplify radial error where the arc turns vertical
            for s in &c.samples {
                let off = (s.r.hypot(s.f + 1.0 / h) - 1.0 / h).abs();
                assert!(off < 1e-6, "r = {}: off by {off}", s.r);
            }
        }
    }

    #[test]
    fn profile_satisfies_the_mean_curvature_equation() {
        for params in spaces() {
            let c = shoot_rotational_graph(1.0, &params, 1e-3).unwrap();
            for s in c.samples.iter().skip(1) {
                let jet = radial_jet(s.r, s.f, s.fp, s.fpp);
                let got = mean_curvature(&jet, &params, Orientation::Downward).unwrap();
                assert!((got - 1.0).abs() < 1e-8, "{params:?} r = {}: H = {got}", s.r);
            }
        }
    }

    #[test]
    fn profile_invariants() {
        for params in spaces() {
            let c = shoot_rotational_graph(2.0, &params, 1e-3).unwrap();
            assert_eq!(c.termination, Termination::Equator);
            assert_eq!(c.samples[0].fp, 0.0);
            assert!(c.samples.windows(2).all(|w| w[1].r > w[0].r));
            let (last, body) = c.samples.split_last().unwrap();
            assert!(last.nu.abs() < EQUATOR_NU && last.fp.abs() > 1e4);
            assert!(body.iter().all(|s| s.nu.abs() >= EQUATOR_NU && s.fp.abs() <= 1e4 * 1e3));
            assert!(body.iter().all(|s| s.fp.abs() < 1e4 || s.nu.abs() < 1e-3));
        }
    }

    #[test]
    fn equator_sits_at_coordinate_radius_inverse_h() {
        // flux first integral: 2π a λ(a) = 2H · π a² λ(a) at the equator
        for params in spaces() {
            for h in [0.6, 1.0, 3.0] {
                let c = shoot_rotational_graph(h, &params, 1e-3).unwrap();
                let r = c.equator_radius().unwrap();
                assert!((r - 1.0 / h).abs() < 1e-6, "{params:?} H = {h}: {r}");
            }
        }
    }

    #[test]
    fn nil_height_under_step_halving() {
        let nil = SpaceParams::nil(0.5).unwrap();
        let a = shoot_rotational_graph(1.0, &nil, 1e-3).unwrap().hemisphere_height.unwrap();
        let b = shoot_rotational_graph(1.0, &nil, 5e-4).unwrap().hemisphere_height.unwrap();
        assert!((a - b).abs() < 1e-6);
        // frozen from the step-halved shot
        assert!((b - 1.079_558_261).abs() < 1e-8, "{b}");
    }

    #[test]
    fn hemisphere_height_decreases_in_h() {
        for params in spaces() {
            let heights: Vec<f64> = [0.6, 1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|&h| hemisphere_height(h, &params).unwrap())
                .collect();
            assert!(heights.windows(2).all(|w| w[1] < w[0]), "{params:?}: {heights:?}");
        }
    }

    #[test]
    fn no_sphere_below_critical_curvature() {
        let psl = SpaceParams::psl(-1.0, 0.5).unwrap();
        assert_eq!(shoot_rotational_graph(0.49, &psl, 1e-3).unwrap_err(), Error::NoSphere(0.49));
        assert_eq!(hemisphere_height(0.49, &psl).unwrap_err(), Error::NoSphere(0.49));
        assert!(shoot_rotational_graph(1.0, &psl, 0.0).is_err());
    }

    #[test]
    fn columns_have_a_header_and_one_row_per_sample() {
        let c = shoot_rotational_graph(1.0, &SpaceParams::euclidean(), 1e-3).unwrap();
        let text = c.to_columns();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("r f fp nu"));
        assert_eq!(lines.count(), c.samples.len());
    }

    #[test]
    fn cylinder_circles() {
        let flat = cmc_cylinder_curve(1.0, &SpaceParams::euclidean()).unwrap();
        assert!(flat.closed && (flat.radius.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(flat.geodesic_curvature, 2.0);

        let open = cmc_cylinder_curve(1.0, &SpaceParams::new(-4.0, 0.0).unwrap()).unwrap();
        assert!(!open.closed && open.radius.is_none());

        // hyperbolic circle of geodesic curvature k in curvature κ: coth(√−κ ρ) √−κ = k
        for (kappa, h) in [(-1.0, 1.0), (-1.0, 0.6), (-4.0, 1.5), (-9.0, 2.0)] {
            let c = cmc_cylinder_curve(h, &SpaceParams::new(kappa, 0.5).unwrap()).unwrap();
            let s = (-kappa).sqrt();
            let want = (s / (2.0 * h)).atanh() / s;
            assert!(c.closed && (c.radius.unwrap() - want).abs() < 1e-9, "{kappa} {h}: {:?} vs {want}", c.radius);
        }
        assert!(cmc_cylinder_curve(0.0, &SpaceParams::euclidean()).is_err());
    }

    #[test]
    fn coordinate_circle_curvature_matches_conformal_formula() {
        // k = e^{−φ}(1/a + ∂_r φ) for the conformal metric e^{2φ}|dx|², φ = ln λ
        let params = SpaceParams::psl(-1.0, 0.5).unwrap();
        for a in [0.1, 0.5, 1.0, 1.7] {
            let lam = 4.0 / (4.0 - a * a);
            let want = 1.0 / (lam * a) + a / 2.0;
            let got = coordinate_circle_curvature(a, &params).unwrap();
            assert!((got - want).abs() < 1e-8, "{a}: {got} vs {want}");
        }
    }
}
