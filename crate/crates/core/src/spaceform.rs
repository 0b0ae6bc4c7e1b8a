//! The three simply connected space forms in geodesic polar coordinates about
//! a base point `p`.
//!
//! Points are modelled in the ambient space R^{n+1} with the bilinear form
//! `<a, b> = K a_0 b_0 + a_1 b_1 + ... + a_n b_n`:
//!
//! ```text
//! X(r, u) = (cs_K(r), sn_K(r) u),   u in S^{n-1}
//! ```
//!
//! which is the hyperboloid for K = -1, the round sphere for K = +1 and the
//! affine chart `{X_0 = 1}` for K = 0. Geodesics are then exact:
//! `gamma(t) = cs_K(t) X + sn_K(t) v`, and the model potential is `V = X_0`.
//!
//! All tangent vectors and Hessians are expressed in the orthonormal polar
//! frame `{e_r, e_1, ..., e_{n-1}}` where `e_a` are the unit coordinate
//! directions of the sphere of directions, rescaled by `1 / sn_K(r)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Points of the hemisphere must satisfy `r < pi/2 - HEMISPHERE_GUARD`.
pub const HEMISPHERE_GUARD: f64 = 1e-9;

/// Tolerance on the unit length of direction vectors.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Sign of the sectional curvature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Curvature {
    Hyperbolic,
    Euclidean,
    Spherical,
}

impl Curvature {
    pub fn from_sign(k: i32) -> Result<Self> {
        match k {
            -1 => Ok(Curvature::Hyperbolic),
            0 => Ok(Curvature::Euclidean),
            1 => Ok(Curvature::Spherical),
            other => Err(Error::Domain(format!(
                "curvature must be -1, 0 or +1, got {other}"
            ))),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Curvature::Hyperbolic => -1.0,
            Curvature::Euclidean => 0.0,
            Curvature::Spherical => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Curvature::Hyperbolic => "hyperbolic",
            Curvature::Euclidean => "euclidean",
            Curvature::Spherical => "hemisphere",
        }
    }
}

/// `(sn_K(t), cs_K(t))` for any real `t`, without the hemisphere check.
pub fn trig(k: f64, t: f64) -> (f64, f64) {
    if k < 0.0 {
        (t.sinh(), t.cosh())
    } else if k > 0.0 {
        t.sin_cos()
    } else {
        (t, 1.0)
    }
}

/// Ambient curvature and dimension. Only n = 2 and n = 3 are supported since
/// directions are stored as explicit angles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceForm {
    curvature: Curvature,
    dim: usize,
}

/// Unit direction about the base point.
///
/// `Circle` for n = 2 (angle in `[0, 2pi)`), `Sphere` for n = 3 with colatitude
/// in `[0, pi]` and longitude in `[0, 2pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Direction {
    Circle { angle: f64 },
    Sphere { colat: f64, lon: f64 },
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl Direction {
    pub fn circle(angle: f64) -> Self {
        Direction::Circle {
            angle: wrap_angle(angle),
        }
    }

    pub fn sphere(colat: f64, lon: f64) -> Self {
        // fold colatitude into [0, pi], moving across the pole when needed
        let c = colat.rem_euclid(TAU);
        let (colat, lon) = if c > PI { (TAU - c, lon + PI) } else { (c, lon) };
        Direction::Sphere {
            colat,
            lon: wrap_angle(lon),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Direction::Circle { .. } => 2,
            Direction::Sphere { .. } => 3,
        }
    }

    /// The direction as a unit vector of R^n.
    pub fn unit(&self) -> DVector<f64> {
        match *self {
            Direction::Circle { angle } => DVector::from_vec(vec![angle.cos(), angle.sin()]),
            Direction::Sphere { colat, lon } => {
                let (sp, cp) = colat.sin_cos();
                let (sl, cl) = lon.sin_cos();
                DVector::from_vec(vec![sp * cl, sp * sl, cp])
            }
        }
    }

    /// Orthonormal basis of the tangent space of S^{n-1} at this direction:
    /// `d/dtheta` for n = 2, `(d/dcolat, unit d/dlon)` for n = 3.
    pub fn tangent_basis(&self) -> Vec<DVector<f64>> {
        match *self {
            Direction::Circle { angle } => {
                vec![DVector::from_vec(vec![-angle.sin(), angle.cos()])]
            }
            Direction::Sphere { colat, lon } => {
                let (sp, cp) = colat.sin_cos();
                let (sl, cl) = lon.sin_cos();
                vec![
                    DVector::from_vec(vec![cp * cl, cp * sl, -sp]),
                    DVector::from_vec(vec![-sl, cl, 0.0]),
                ]
            }
        }
    }

    /// Direction of a nonzero vector of R^2 or R^3.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        match v.len() {
            2 => Ok(Direction::circle(v[1].atan2(v[0]))),
            3 => {
                let rho = (v[0] * v[0] + v[1] * v[1]).sqrt();
                Ok(Direction::sphere(rho.atan2(v[2]), v[1].atan2(v[0])))
            }
            n => Err(Error::Unsupported(format!("directions in R^{n}"))),
        }
    }

    /// Rotation about the polar axis (the only rotation for n = 2).
    pub fn rotated(&self, angle: f64) -> Self {
        match *self {
            Direction::Circle { angle: a } => Direction::circle(a + angle),
            Direction::Sphere { colat, lon } => Direction::sphere(colat, lon + angle),
        }
    }
}

/// Point in geodesic polar coordinates about the base point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: Direction,
}

impl PolarPoint {
    pub fn new(r: f64, theta: Direction) -> Self {
        PolarPoint { r, theta }
    }

    pub fn planar(r: f64, angle: f64) -> Self {
        PolarPoint::new(r, Direction::circle(angle))
    }

    pub fn spatial(r: f64, colat: f64, lon: f64) -> Self {
        PolarPoint::new(r, Direction::sphere(colat, lon))
    }

    /// Geodesic normal coordinates `r u` of this point.
    pub fn normal_coordinates(&self) -> DVector<f64> {
        self.theta.unit() * self.r
    }

    pub fn rotated(&self, angle: f64) -> Self {
        PolarPoint::new(self.r, self.theta.rotated(angle))
    }
}

impl SpaceForm {
    pub fn new(curvature: Curvature, dim: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::Unsupported(format!(
                "dimension {dim}; only n = 2 and n = 3 are implemented"
            )));
        }
        Ok(SpaceForm { curvature, dim })
    }

    pub fn from_sign(k: i32, dim: usize) -> Result<Self> {
        SpaceForm::new(Curvature::from_sign(k)?, dim)
    }

    pub fn hyperbolic(dim: usize) -> Result<Self> {
        SpaceForm::new(Curvature::Hyperbolic, dim)
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        SpaceForm::new(Curvature::Euclidean, dim)
    }

    pub fn hemisphere(dim: usize) -> Result<Self> {
        SpaceForm::new(Curvature::Spherical, dim)
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    /// K as a real number.
    pub fn k(&self) -> f64 {
        self.curvature.value()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest admissible radius (infinite unless K = +1).
    pub fn max_radius(&self) -> f64 {
        match self.curvature {
            Curvature::Spherical => FRAC_PI_2 - HEMISPHERE_GUARD,
            _ => f64::INFINITY,
        }
    }

    pub fn check_radius(&self, r: f64) -> Result<()> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("radius must be finite and >= 0, got {r}")));
        }
        if self.curvature == Curvature::Spherical && r >= self.max_radius() {
            return Err(Error::Hemisphere {
                r,
                guard: HEMISPHERE_GUARD,
            });
        }
        Ok(())
    }

    pub fn check_point(&self, x: &PolarPoint) -> Result<()> {
        if x.theta.dim() != self.dim {
            return Err(Error::Domain(format!(
                "direction of dimension {} in a space of dimension {}",
                x.theta.dim(),
                self.dim
            )));
        }
        self.check_radius(x.r)
    }

    /// Warp functions `(sn_K(r), cs_K(r))`.
    pub fn warp(&self, r: f64) -> Result<(f64, f64)> {
        self.check_radius(r)?;
        Ok(trig(self.k(), r))
    }

    /// Ambient bilinear form `K a_0 b_0 + sum_{i>0} a_i b_i`.
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let spatial: f64 = a.iter().zip(b.iter()).skip(1).map(|(x, y)| x * y).sum();
        self.k() * a[0] * b[0] + spatial
    }

    pub fn embed(&self, x: &PolarPoint) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let (sn, cs) = trig(self.k(), x.r);
        let u = x.theta.unit();
        let mut out = DVector::zeros(self.dim + 1);
        out[0] = cs;
        for i in 0..self.dim {
            out[i + 1] = sn * u[i];
        }
        Ok(out)
    }

    /// Polar coordinates of an ambient point of the model.
    pub fn locate(&self, ambient: &DVector<f64>) -> Result<PolarPoint> {
        let spatial: Vec<f64> = ambient.iter().skip(1).copied().collect();
        let norm = spatial.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = match self.curvature {
            Curvature::Hyperbolic => norm.asinh(),
            Curvature::Euclidean => norm,
            Curvature::Spherical => {
                if ambient[0] <= 0.0 {
                    return Err(Error::Hemisphere {
                        r: norm.atan2(ambient[0]),
                        guard: HEMISPHERE_GUARD,
                    });
                }
                norm.atan2(ambient[0])
            }
        };
        self.check_radius(r)?;
        let theta = if norm > 0.0 {
            Direction::from_vector(&spatial)?
        } else if self.dim == 2 {
            Direction::circle(0.0)
        } else {
            Direction::sphere(0.0, 0.0)
        };
        Ok(PolarPoint::new(r, theta))
    }

    /// Orthonormal polar frame at `x` as ambient vectors.
    pub fn frame(&self, x: &PolarPoint) -> Result<Vec<DVector<f64>>> {
        self.check_point(x)?;
        let k = self.k();
        let (sn, cs) = trig(k, x.r);
        let u = x.theta.unit();
        let mut e_r = DVector::zeros(self.dim + 1);
        e_r[0] = -k * sn;
        for i in 0..self.dim {
            e_r[i + 1] = cs * u[i];
        }
        let mut out = vec![e_r];
        for t in x.theta.tangent_basis() {
            let mut e = DVector::zeros(self.dim + 1);
            for i in 0..self.dim {
                e[i + 1] = t[i];
            }
            out.push(e);
        }
        Ok(out)
    }

    pub fn tangent_to_ambient(&self, x: &PolarPoint, v: &DVector<f64>) -> Result<DVector<f64>> {
        let frame = self.frame(x)?;
        let mut out = DVector::zeros(self.dim + 1);
        for (c, e) in v.iter().zip(frame.iter()) {
            out += e * *c;
        }
        Ok(out)
    }

    pub fn ambient_to_tangent(&self, x: &PolarPoint, w: &DVector<f64>) -> Result<DVector<f64>> {
        let frame = self.frame(x)?;
        Ok(DVector::from_iterator(
            self.dim,
            frame.iter().map(|e| self.inner(w, e)),
        ))
    }

    /// Geodesic from `x` with unit initial velocity `direction` (frame
    /// components) followed for arclength `t`. Returns the end point and the
    /// velocity there, in the frame of the end point.
    pub fn geodesic(
        &self,
        x: &PolarPoint,
        direction: &DVector<f64>,
        t: f64,
    ) -> Result<(PolarPoint, DVector<f64>)> {
        if direction.len() != self.dim {
            return Err(Error::Domain(format!(
                "direction has {} components, expected {}",
                direction.len(),
                self.dim
            )));
        }
        if (direction.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Domain(format!(
                "direction must be a unit vector, |d| = {}",
                direction.norm()
            )));
        }
        let base = self.embed(x)?;
        let v = self.tangent_to_ambient(x, direction)?;
        let (end, velocity) = self.ambient_geodesic(&base, &v, t);
        let y = self.locate(&end)?;
        let vel = self.ambient_to_tangent(&y, &velocity)?;
        Ok((y, vel))
    }

    /// Geodesic in the ambient model: position and velocity at time `t`.
    pub fn ambient_geodesic(
        &self,
        base: &DVector<f64>,
        velocity: &DVector<f64>,
        t: f64,
    ) -> (DVector<f64>, DVector<f64>) {
        let k = self.k();
        let (sn, cs) = trig(k, t);
        let mut pos = base * cs + velocity * sn;
        let vel = base * (-k * sn) + velocity * cs;
        if self.curvature == Curvature::Euclidean {
            pos[0] = 1.0;
        }
        (pos, vel)
    }
}

/// Warp functions `(sn_K(r), cs_K(r))` satisfying `sn' = cs`, `cs' = -K sn`.
pub fn warp(space: &SpaceForm, r: f64) -> Result<(f64, f64)> {
    space.warp(r)
}

/// The model potential `V = cs_K(r)` with its gradient and Hessian in the
/// polar frame. The Hessian is `-K V Id` by construction.
pub fn potential(space: &SpaceForm, x: &PolarPoint) -> Result<crate::field::Jet> {
    space.check_point(x)?;
    let k = space.k();
    let n = space.dim();
    let (sn, cs) = trig(k, x.r);
    let mut grad = DVector::zeros(n);
    grad[0] = -k * sn;
    Ok(crate::field::Jet {
        value: cs,
        grad,
        hess: DMatrix::identity(n, n) * (-k * cs),
    })
}

/// Laplace-Beltrami operator as the trace of the covariant Hessian.
pub fn laplace_beltrami(space: &SpaceForm, f: &dyn ScalarField, x: &PolarPoint) -> Result<f64> {
    Ok(f.jet(space, x)?.hess.trace())
}

/// End point of the geodesic from `x` with unit velocity `direction`.
pub fn geodesic_flow_point(
    space: &SpaceForm,
    x: &PolarPoint,
    direction: &DVector<f64>,
    t: f64,
) -> Result<PolarPoint> {
    space.geodesic(x, direction, t).map(|(y, _)| y)
}

/// Covariant Hessian by second differences along geodesics.
///
/// Diagonal entries come from `f(gamma_i(h)) - 2 f(x) + f(gamma_i(-h))`,
/// off-diagonal ones by polarization along `(e_i + e_j) / sqrt 2`. Only values
/// of `f` are used, so this is independent of any closed-form Hessian.
pub fn fd_hessian<F>(space: &SpaceForm, value: F, x: &PolarPoint, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&PolarPoint) -> Result<f64>,
{
    let n = space.dim();
    let centre = value(x)?;
    let second = |d: &DVector<f64>| -> Result<f64> {
        let plus = value(&geodesic_flow_point(space, x, d, step)?)?;
        let minus = value(&geodesic_flow_point(space, x, d, -step)?)?;
        Ok((plus - 2.0 * centre + minus) / (step * step))
    };
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut d = DVector::zeros(n);
        d[i] = 1.0;
        hess[(i, i)] = second(&d)?;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d = DVector::zeros(n);
            d[i] = std::f64::consts::FRAC_1_SQRT_2;
            d[j] = std::f64::consts::FRAC_1_SQRT_2;
            let dd = second(&d)?;
            let off = dd - 0.5 * (hess[(i, i)] + hess[(j, j)]);
            hess[(i, j)] = off;
            hess[(j, i)] = off;
        }
    }
    Ok(hess)
}

/// Max over samples of `|FD-Hessian(V) + K V Id|_inf`, with V read off the
/// ambient coordinate `X_0` of each stencil point.
pub fn hessian_identity_residual(space: &SpaceForm, samples: &[PolarPoint], step: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("empty sample list".into()));
    }
    if space.curvature() == Curvature::Euclidean {
        return Ok(0.0);
    }
    let k = space.k();
    let n = space.dim();
    let v_of = |y: &PolarPoint| -> Result<f64> { Ok(space.embed(y)?[0]) };
    let mut worst: f64 = 0.0;
    for x in samples {
        let h = fd_hessian(space, v_of, x, step)?;
        let v = v_of(x)?;
        let res = h + DMatrix::identity(n, n) * (k * v);
        worst = worst.max(res.amax());
    }
    Ok(worst)
}
